import gzip
import struct

import numpy as np
import pytest

ACCEPTANCE_LINES = []


def write_idx(path, array, magic, compress=False):
    array = np.asarray(array, dtype=np.uint8)
    head = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
    data = head + array.tobytes()
    if compress:
        with gzip.open(path, "wb") as fh:
            fh.write(data)
    else:
        path.write_bytes(data)


def write_mnist_dir(root, train_x, train_y, test_x, test_y):
    root.mkdir(parents=True, exist_ok=True)
    write_idx(root / "train-images-idx3-ubyte", train_x, 0x803)
    write_idx(root / "train-labels-idx1-ubyte", train_y, 0x801)
    write_idx(root / "t10k-images-idx3-ubyte", test_x, 0x803)
    write_idx(root / "t10k-labels-idx1-ubyte", test_y, 0x801)
    return root


def write_cifar_batch(path, images, labels):
    rec = np.concatenate([np.asarray(labels, np.uint8)[:, None],
                          np.asarray(images, np.uint8).reshape(len(labels), -1)], axis=1)
    path.write_bytes(rec.tobytes())


@pytest.fixture(scope="session")
def tiny_mnist_dir(tmp_path_factory):
    """Synthetic IDX files: 64 train / 32 test random 28x28 byte images."""
    rng = np.random.default_rng(12)
    root = tmp_path_factory.mktemp("tiny_mnist")
    return write_mnist_dir(
        root,
        rng.integers(0, 256, (64, 28, 28)), rng.integers(0, 10, 64),
        rng.integers(0, 256, (32, 28, 28)), rng.integers(0, 10, 32),
    )


@pytest.fixture(scope="session")
def tiny_cifar_dir(tmp_path_factory):
    rng = np.random.default_rng(13)
    root = tmp_path_factory.mktemp("tiny_cifar")
    for i in range(1, 6):
        write_cifar_batch(root / f"data_batch_{i}.bin",
                          rng.integers(0, 256, (4, 3, 32, 32)), rng.integers(0, 10, 4))
    write_cifar_batch(root / "test_batch.bin", rng.integers(0, 256, (6, 3, 32, 32)),
                      rng.integers(0, 10, 6))
    return root


@pytest.fixture(scope="session")
def mnist_subset_dir(tmp_path_factory):
    """Real MNIST digits (the 5000-image subset shipped with mlxtend) as IDX files.

    A seeded permutation puts 4000 images in the training split and 1000 in
    the test split.
    """
    data = pytest.importorskip("mlxtend.data")
    X, y = data.mnist_data()
    perm = np.random.default_rng(0).permutation(len(y))
    X = X.reshape(-1, 28, 28).astype(np.uint8)[perm]
    y = y.astype(np.uint8)[perm]
    root = tmp_path_factory.mktemp("mnist_subset")
    return write_mnist_dir(root, X[:4000], y[:4000], X[4000:], y[4000:])


@pytest.fixture
def acceptance_line():
    def record(number, passed, text):
        status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        line = f"[{status}] criterion {number}: {text}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
