"""Lecture/écriture des images PGM binaires (P5, maxval 255)."""
import logging
import re
from pathlib import Path
from typing import Union

import numpy as np

from models.errors import ImageFormatError
from models.hog_models import GrayImage

logger = logging.getLogger(__name__)

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def parse_pgm(data: bytes) -> GrayImage:
    if not data.startswith(b"P5"):
        raise ImageFormatError("bad magic: expected binary graymap 'P5'")
    position = 2
    header = []
    for _ in range(3):
        match = _TOKEN.match(data, position)
        if match is None:
            raise ImageFormatError("truncated PGM header")
        header.append(match.group(1))
        position = match.end()
    try:
        width, height, maxval = (int(token) for token in header)
    except ValueError:
        raise ImageFormatError(f"non-numeric PGM header fields: {header!r}")
    if width < 1 or height < 1:
        raise ImageFormatError(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise ImageFormatError(f"unsupported maxval {maxval} (only 255)")
    # un seul octet d'espacement après maxval
    position += 1
    payload = data[position:position + width * height]
    if len(payload) != width * height:
        raise ImageFormatError(f"expected {width * height} samples, got {len(payload)}")
    samples = np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()
    return GrayImage(samples=samples)


def read_pgm(path: Union[str, Path]) -> GrayImage:
    with open(path, "rb") as f:
        image = parse_pgm(f.read())
    logger.info(f"Image {path} lue: {image.width}x{image.height}")
    return image


def encode_pgm(image: GrayImage) -> bytes:
    if image.frac_bits:
        raise ImageFormatError(f"cannot encode an image with {image.frac_bits} fractional bits as 8-bit PGM")
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image.samples.astype(np.uint8).tobytes()


def write_pgm(path: Union[str, Path], image: GrayImage) -> None:
    with open(path, "wb") as f:
        f.write(encode_pgm(image))
