import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bitscope import io as bio  # noqa: E402
from bitscope.nn.model import Model, init_model  # noqa: E402

ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion for the summary."""
    def record(n, ok, detail):
        ACCEPTANCE.append((n, bool(ok), detail))
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return record


@pytest.fixture(scope="session")
def mnist_dir(tmp_path_factory):
    env = os.environ.get("LOP_DATA_DIR")
    if env:
        root = Path(env)
        if all(p.exists() for p in bio.split_paths(root, "train") + bio.split_paths(root, "test")):
            return root
    root = tmp_path_factory.mktemp("mnist")
    try:
        bio.build_mnist_subset(root)
    except bio.DataError as exc:
        pytest.skip(f"MNIST sample unavailable: {exc}")
    return root


@pytest.fixture(scope="session")
def mnist_train(mnist_dir):
    return bio.load_split(mnist_dir, "train")


@pytest.fixture(scope="session")
def mnist_test(mnist_dir):
    return bio.load_split(mnist_dir, "test")


@pytest.fixture(scope="session")
def trained_desk(mnist_train):
    """Desk-scale model trained once per session with default settings."""
    from bitscope.nn.train import TrainSettings, train_reference
    t0 = time.perf_counter()
    model = train_reference("desk", mnist_train, TrainSettings())
    return model, time.perf_counter() - t0


@pytest.fixture
def tiny_model():
    return init_model("tiny", seed=7)


def dense_model(sizes, input_shape=None, seed=0, scale=1.0) -> Model:
    """Flatten + dense/relu stack used by the toy tests."""
    from bitscope.nn.model import LayerSpec
    rng = np.random.default_rng(seed)
    input_shape = input_shape or (1, 1, sizes[0])
    layers = [LayerSpec("flatten")]
    weights, biases = {}, {}
    for k, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
        if k:
            layers.append(LayerSpec("relu"))
        li = len(layers)
        layers.append(LayerSpec("dense", f"FC{k + 1}", in_features=n_in, units=n_out))
        weights[li] = (rng.standard_normal((n_out, n_in)) * scale).astype(np.float32)
        biases[li] = (rng.standard_normal(n_out) * 0.1 * scale).astype(np.float32)
    return Model(input_shape, layers, weights, biases)
