import logging
from pathlib import Path

import click
import numpy as np

from app.commands.common import handle_toolkit_errors, load_config, ok, seed_option
from app.schemas.image import PreprocessSpec
from app.services.dataset_service import load_gray
from app.services.image_service import augment_upsample, encode_pgm, preprocess_image
from app.utils.config_files import load_preprocess_spec
from app.utils.storage import atomic_write_bytes

logger = logging.getLogger(__name__)


@click.command("preprocess")
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--output-dir", "-o", required=True, type=click.Path(file_okay=False), help="Directory for the processed PGM files.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Augment/CLAHE config file (key = value).")
@click.option("--augment/--no-augment", default=False, help="Apply one seeded random augmentation per image.")
@click.option("--upsample-to", type=click.IntRange(min=1), default=None, help="Top the inputs up to this many images with augmented copies.")
@seed_option
@handle_toolkit_errors
def preprocess_command(inputs, output_dir, config_path, augment, upsample_to, seed):
    """Decode radiographs, apply CLAHE and augmentation, resize, write PGM."""
    spec = load_config(load_preprocess_spec, config_path, "--config", PreprocessSpec)
    if seed is not None:
        spec = spec.model_copy(update={"augment": spec.augment.model_copy(update={"rng_seed": seed})})
    base_seed = spec.augment.rng_seed

    images = [load_gray(path) for path in inputs]
    names = [Path(path).stem for path in inputs]
    if upsample_to is not None:
        images = augment_upsample(images, upsample_to, spec.augment)
        names += [f"{names[k % len(inputs)]}_aug{k:05d}" for k in range(upsample_to - len(inputs))]

    outputs = []
    for index, image in enumerate(images):
        # upsampled copies are already augmented
        rng = np.random.default_rng(base_seed ^ index) if augment and index < len(inputs) else None
        outputs.append(encode_pgm(preprocess_image(image, spec, rng)))

    output_dir = Path(output_dir)
    for name, data in zip(names, outputs):
        atomic_write_bytes(output_dir / f"{name}.pgm", data)
    ok(f"{len(outputs)} images written to {output_dir}")
