"""Python bindings for the focus accelerator simulator."""

from ._focus import (  # noqa: F401
    FormatError,
    ValidationError,
    attention_cycles,
    cli,
    decode_offsets,
    default_config_json,
    encode_offsets,
    gemm_tile_cycles,
    generate_trace,
    matcher_cycles,
    read_trace,
    run,
    sorter_cycles,
    top_k_select,
    write_trace,
)
