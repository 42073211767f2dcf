"""Low-light image enhancement with a hierarchical vector-quantized autoencoder."""
from ._brightvae import (  # noqa: F401
    default_config,
    enhance,
    evaluate,
    make_synth_dir,
    make_synth_pairs,
    psnr,
    read_png,
    ssim,
    train,
    write_png,
)
