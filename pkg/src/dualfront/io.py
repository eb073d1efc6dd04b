"""Image, label-map and field file I/O.

Images are 8-bit grayscale or RGB PNG/PGM/PPM, mapped to [0, 1] by /255.
Distance and velocity fields use a small portable grid format: one ASCII
header line ``FGRID v1 <width> <height>`` followed by row-major
little-endian 64-bit floats (infinities kept as IEEE infinities).
"""

import numpy as np
from PIL import Image

from .grid import ImageGrid, LabelMap


def load_image(path) -> ImageGrid:
    img = Image.open(path)
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB" if img.mode in ("P", "RGBA", "CMYK") else "L")
    data = np.asarray(img, dtype=np.float64) / 255.0
    return ImageGrid(data)


def save_image(path, data):
    """Write a [0,1] float array (H, W) or (H, W, 3) as an 8-bit image."""
    arr = np.asarray(data)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    out = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(out).save(path)


def label_levels(n: int) -> np.ndarray:
    """Distinct 8-bit gray levels for regions 1..n (invertible for n <= 255)."""
    if n > 255:
        raise ValueError("cannot encode more than 255 regions in 8 bits")
    return (np.arange(1, n + 1) * 255) // n


def save_labels(path, labels: LabelMap):
    levels = label_levels(labels.n)
    Image.fromarray(levels[labels.labels - 1].astype(np.uint8)).save(path)


def load_labels(path) -> LabelMap:
    """Read a label image, mapping its distinct gray values to labels 1..n."""
    arr = np.asarray(Image.open(path).convert("L"))
    values = np.unique(arr)
    lut = np.zeros(256, dtype=np.int32)
    lut[values] = np.arange(1, len(values) + 1, dtype=np.int32)
    return LabelMap(lut[arr], len(values))


def contour_mask(labels: LabelMap) -> np.ndarray:
    """Pixels 4-adjacent to a differing label (both sides of the contour)."""
    lab = labels.labels
    edge = np.zeros(lab.shape, dtype=bool)
    edge[:-1, :] |= lab[:-1, :] != lab[1:, :]
    edge[1:, :] |= lab[1:, :] != lab[:-1, :]
    edge[:, :-1] |= lab[:, :-1] != lab[:, 1:]
    edge[:, 1:] |= lab[:, 1:] != lab[:, :-1]
    return edge


def save_overlay(path, image: ImageGrid, labels: LabelMap):
    """Write the input image with contour pixels painted red."""
    if image.channels == 1:
        rgb = np.repeat(image.data, 3, axis=2).copy()
    else:
        rgb = image.data.copy()
    edge = contour_mask(labels)
    rgb[edge] = (1.0, 0.0, 0.0)
    save_image(path, rgb)


def write_fgrid(path, field):
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 2:
        raise ValueError("fields are 2-D")
    h, w = field.shape
    with open(path, "wb") as fh:
        fh.write(f"FGRID v1 {w} {h}\n".encode("ascii"))
        fh.write(field.astype("<f8").tobytes())


def read_fgrid(path):
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 4 or header[0] != "FGRID" or header[1] != "v1":
            raise ValueError("not an FGRID v1 file")
        w, h = int(header[2]), int(header[3])
        data = np.frombuffer(fh.read(w * h * 8), dtype="<f8")
    return data.reshape(h, w).copy()
