import os
import struct
from pathlib import Path

import numpy as np
import pytest


def write_idx_pair(dirpath: Path, images: np.ndarray, labels: np.ndarray,
                   image_magic: int = 0x00000803, label_magic: int = 0x00000801):
    """Write a hand-built IDX image/label file pair; returns (images_path, labels_path)."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    count, rows, cols = images.shape
    images_path = dirpath / "images.idx"
    labels_path = dirpath / "labels.idx"
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", image_magic, count, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", label_magic, labels.size))
        fh.write(labels.tobytes())
    return images_path, labels_path


def find_mnist_dir():
    """Directory holding the four MNIST IDX files, or None.

    Looked up from CLUSTERGUARD_MNIST_DIR, then ./data/mnist. Files may be
    named with either '.' or '-' separators (train-images-idx3-ubyte etc.).
    """
    candidates = []
    env = os.environ.get("CLUSTERGUARD_MNIST_DIR")
    if env:
        candidates.append(Path(env))
    candidates.append(Path(__file__).resolve().parent.parent / "data" / "mnist")
    for root in candidates:
        if root.is_dir() and _resolve_mnist_files(root) is not None:
            return root
    return None


def _resolve_mnist_files(root: Path):
    names = {
        "train_images": ["train-images-idx3-ubyte", "train-images.idx3-ubyte"],
        "train_labels": ["train-labels-idx1-ubyte", "train-labels.idx1-ubyte"],
        "test_images": ["t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"],
        "test_labels": ["t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"],
    }
    found = {}
    for key, options in names.items():
        for option in options:
            if (root / option).exists():
                found[key] = str(root / option)
                break
        else:
            return None
    return found


@pytest.fixture(scope="session")
def mnist_files():
    root = find_mnist_dir()
    if root is None:
        pytest.skip(
            "MNIST IDX files not available: no network access to dataset hosts in "
            "this environment; set CLUSTERGUARD_MNIST_DIR to run this test"
        )
    return _resolve_mnist_files(root)
