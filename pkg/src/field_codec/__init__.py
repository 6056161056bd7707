"""Neural compression of 2-D velocity fields with a SIREN auto-decoder."""

from .data import (
    FAMILIES,
    Dataset,
    VelocityField,
    build_dataset,
    denormalize,
    generate,
    load_dataset,
    make_grid,
    normalize,
    read_field,
    save_dataset,
    write_field,
)
from .siren import DecoderConfig, SirenDecoder, decoder_backward, decoder_forward, init_decoder, param_count
from .tensor import RngStream
from .training import TrainConfig, Trainer, train

__version__ = "0.1.0"
