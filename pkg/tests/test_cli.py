import json

import numpy as np
import pytest

from sparseapt import cli, nn
from sparseapt.compression import compression_rate, encode_dense, read_model

BLOBS = {
    "dataset": "blobs",
    "blob_classes": 3,
    "blob_per_class": 60,
    "blob_dim": 4,
    "hidden": [8],
    "validation_fraction": 0.25,
    "k": 5,
    "lambda1": 1e-3,
    "lambda2": 1e-4,
    "kmeans_period": 10,
    "soft_budget": 60,
    "hard_budget": 30,
    "batch_size": 16,
    "eval_every": 30,
}


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def parse_kv(text):
    rows = [line.split(",", 1) for line in text.strip().splitlines()]
    return {k: v for k, v in rows if k != "key"}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(BLOBS))
    return path


@pytest.fixture
def trained(tmp_path, config, capsys):
    out = tmp_path / "run"
    code, _, err = run(capsys, "train", "--config", config, "--out", out)
    assert code == 0, err
    return out


def test_train_outputs_and_config_echo(trained, config, tmp_path, capsys):
    for name in ("metrics.csv", "config.json", "model.sapt", "soft_end.sapt"):
        assert (trained / name).exists()
    echoed = json.loads((trained / "config.json").read_text())
    for key, value in BLOBS.items():
        assert echoed[key] == value
    # the echo is itself a valid config that reproduces the run
    code, _, _ = run(capsys, "train", "--config", trained / "config.json", "--out", tmp_path / "again")
    assert code == 0
    assert (tmp_path / "again" / "model.sapt").read_bytes() == (trained / "model.sapt").read_bytes()
    header = (trained / "metrics.csv").read_text().splitlines()[0].split(",")
    assert header[:len(cli.METRIC_COLUMNS)] == list(cli.METRIC_COLUMNS)
    assert header[-1] == "center_4"


def test_flags_override_config(tmp_path, config, capsys):
    out = tmp_path / "o"
    code, _, _ = run(capsys, "train", "--config", config, "--out", out, "--k", 3, "--report", "jsonl",
                     "--hard-iters", 0)
    assert code == 0
    echoed = json.loads((out / "config.json").read_text())
    assert echoed["k"] == 3 and echoed["hard_budget"] == 0 and echoed["report"] == "jsonl"
    rows = [json.loads(line) for line in (out / "metrics.jsonl").read_text().splitlines()]
    assert "center_2" in rows[0] and "center_3" not in rows[0]


def test_plain_training_degenerate_config(tmp_path, config, capsys):
    code, out, _ = run(capsys, "train", "--config", config, "--out", tmp_path / "p", "--k", 1,
                       "--lambda1", 0, "--lambda2", 0, "--hard-iters", 0)
    assert code == 0
    assert np.isfinite(float(parse_kv(out)["val_error"]))


def test_rerun_is_byte_identical(tmp_path, config, capsys):
    for cmd in ("train", "baseline"):
        outs = []
        for i in range(2):
            d = tmp_path / f"{cmd}{i}"
            assert run(capsys, cmd, "--config", config, "--out", d)[0] == 0
            outs.append(d)
        for name in ("metrics.csv", "model.sapt", "soft_end.sapt", "config.json"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"dataset": "blobs", "learning_rate_typo": 1}))
    code, _, err = run(capsys, "train", "--config", bad, "--out", tmp_path / "x")
    assert code == 1 and err.startswith("sparseapt-error: config:") and "learning_rate_typo" in err
    bad.write_text("{not json")
    code, _, err = run(capsys, "train", "--config", bad, "--out", tmp_path / "x")
    assert code == 1 and "sparseapt-error: config:" in err
    bad.write_text(json.dumps({"k": 0}))
    assert run(capsys, "train", "--config", bad, "--out", tmp_path / "x")[0] == 1
    code, _, err = run(capsys, "train", "--config", tmp_path / "missing.json", "--out", tmp_path / "x")
    assert code == 1 and "sparseapt-error: io:" in err


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["train"])
    assert exc.value.code == 2
    assert "sparseapt-error: usage:" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2


def test_compress_report_and_eval(trained, config, tmp_path, capsys):
    enc_path = tmp_path / "m.enc"
    code, out, err = run(capsys, "compress", trained / "model.sapt", "--out", enc_path, "--config", config)
    assert code == 0, err
    rep = parse_kv(out)
    n = int(rep["n_params"])
    k = int(rep["k"])
    assert k == BLOBS["k"]
    assert float(rep["codebook_rate"]) == compression_rate(n, 32, k)
    bits = sum(int(v) for key, v in rep.items() if key.startswith("bits_"))
    assert bits == 8 * int(rep["file_bytes"]) == 8 * enc_path.stat().st_size
    assert float(rep["max_compression_rate"]) == pytest.approx(n * 32 / bits, rel=1e-12)

    _, src, _ = run(capsys, "eval", trained / "model.sapt", "--config", config)
    _, dst, _ = run(capsys, "eval", enc_path, "--config", config)
    assert src == dst and src.startswith("error,")
    assert float(rep["error_percent"]) == pytest.approx(100 * float(src.split(",")[1]), rel=1e-12)
    np.testing.assert_array_equal(read_model(enc_path).params.values, read_model(trained / "model.sapt").params.values)


def test_compress_needs_snap_for_untied(trained, config, tmp_path, capsys):
    code, _, err = run(capsys, "compress", trained / "soft_end.sapt", "--out", tmp_path / "s.enc")
    assert code == 1 and "--snap" in err
    code, out, _ = run(capsys, "compress", trained / "soft_end.sapt", "--out", tmp_path / "s.enc", "--snap",
                       "--raw-offsets", "--offset-bits", 4)
    assert code == 0
    assert len(np.unique(read_model(tmp_path / "s.enc").params.values)) <= BLOBS["k"]
    code, _, err = run(capsys, "compress", tmp_path / "s.enc", "--out", tmp_path / "t.enc")
    assert code == 1 and "already encoded" in err


def test_eval_without_config_errors(trained, capsys):
    code, _, err = run(capsys, "eval", trained / "model.sapt")
    assert code == 1 and "sparseapt-error: usage:" in err


def test_inspect_model_and_metrics(trained, tmp_path, capsys):
    out = tmp_path / "ins"
    assert run(capsys, "inspect", trained / "model.sapt", "--out", out, "--bins", 50)[0] == 0
    hist = np.genfromtxt(out / "histogram.csv", delimiter=",", names=True)
    n = read_model(trained / "model.sapt").params.values.size
    assert int(hist["count"].sum()) == n
    assert (out / "histogram.png").exists() and (out / "sparsity.png").exists()

    out2 = tmp_path / "ins2"
    assert run(capsys, "inspect", trained / "metrics.csv", "--out", out2, "--no-plots")[0] == 0
    centers = (out2 / "centers.csv").read_text().splitlines()
    assert centers[0].split(",")[:2] == ["step", "phase"] and len(centers) > 2
    assert not (out2 / "centers.png").exists()


def test_inspect_hard_tied_histogram_bins(tmp_path, capsys):
    spec = nn.NetworkSpec((20, 10, 3))
    centers = np.array([-0.5, 0.0, 0.25, 0.75])
    values = centers[np.arange(spec.n_params) % 4]
    path = tmp_path / "h.sapt"
    path.write_bytes(encode_dense(nn.ParamVector(spec, values), k=4).data)
    # 1.25 / 100 bins is narrower than the smallest gap 0.25
    assert run(capsys, "inspect", path, "--out", tmp_path / "i", "--no-plots")[0] == 0
    hist = np.genfromtxt(tmp_path / "i" / "histogram.csv", delimiter=",", names=True)
    assert int((hist["count"] > 0).sum()) <= 4


def test_inspect_all_zero_sparsity(tmp_path, capsys):
    spec = nn.NetworkSpec((6, 4, 3))
    path = tmp_path / "z.sapt"
    path.write_bytes(encode_dense(nn.ParamVector(spec, np.zeros(spec.n_params)), k=1).data)
    assert run(capsys, "inspect", path, "--out", tmp_path / "z", "--no-plots")[0] == 0
    table = np.genfromtxt(tmp_path / "z" / "sparsity.csv", delimiter=",", names=True)
    assert np.all(table["row_sparsity"] == 100.0) and np.all(table["col_sparsity"] == 100.0)


def test_kmeans_command(tmp_path, capsys):
    f = tmp_path / "v.txt"
    f.write_text("0, 1\n4 5  # comment\n")
    code, out, _ = run(capsys, "kmeans", f, "--k", 2, "--exact")
    assert code == 0
    assert out.splitlines()[0] == "centers,0.5,4.5"
    assert out.splitlines()[2] == "inertia,0.5"
    code, _, err = run(capsys, "kmeans", f, "--k", 5)
    assert code == 1 and "distinct" in err
    f.write_text("1.0\n2.0\nabc\n")
    code, _, err = run(capsys, "kmeans", f)
    assert code == 1 and "sparseapt-error: parse:" in err and ":3:" in err


def test_kmeans_exact_agrees_on_separated_data(tmp_path, capsys):
    rng = np.random.default_rng(3)
    x = np.concatenate([rng.normal(m, 0.05, size=30) for m in (-3.0, 0.0, 4.0)])
    f = tmp_path / "v.txt"
    f.write_text("\n".join(repr(float(v)) for v in x))
    _, fast, _ = run(capsys, "kmeans", f, "--k", 3, "--report", "jsonl")
    _, exact, _ = run(capsys, "kmeans", f, "--k", 3, "--exact", "--report", "jsonl")
    a, b = json.loads(fast), json.loads(exact)
    assert a["assignments"] == b["assignments"]
    np.testing.assert_allclose(a["centers"], b["centers"], rtol=1e-12)


def test_metrics_row_count(trained):
    rows = (trained / "metrics.csv").read_text().strip().splitlines()[1:]
    # one row per eval interval, plus the initial row and the row at the soft->hard switch
    expected = (BLOBS["soft_budget"] + BLOBS["hard_budget"]) // BLOBS["eval_every"] + 2
    assert len(rows) == expected
    phases = [r.split(",")[1] for r in rows]
    assert phases.count("soft") == BLOBS["soft_budget"] // BLOBS["eval_every"] + 1
