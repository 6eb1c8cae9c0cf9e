"""Quantization, CSR packing, Huffman coding and the binary model format."""
from .bits import BitReader, BitWriter
from .huffman import HuffmanTable, huffman_build, huffman_decode, huffman_encode, huffman_lengths
from .modelfile import (
    DecodedModel,
    EncodedModel,
    accounting,
    compression_rate,
    decode,
    encode,
    encode_dense,
    max_compression_rate,
    payload_compression_rate,
    read_model,
    reconstruct,
    write_model,
)
from .packing import CSRBlock, PackedModel, prune_and_pack, unpack_block
from .quantize import QuantizedModel, quantize, quantize_tied, snap_quantize, to_storage
from .stats import LayerSparsity, SparsityReport, sparsity_stats
