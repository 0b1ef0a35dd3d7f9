"""Build the test fixture: a 784-512-512-10 ReLU MLP trained on the
scikit-learn digits set upscaled to 28x28, plus the held-out IDX split.

Training is plain numpy (Adam + softmax cross-entropy) so the package
itself never depends on a deep-learning framework.  The saved model takes
raw 0..255 pixel values: the 1/255 input scaling used during training is
folded into the first weight matrix before export.

The net is trained without biases.  Raw-pixel inputs leave the first
weight matrix around 1e-4, so the accumulated activation scale entering
deeper layers is far below one; real-valued biases would be rescaled by
its inverse inside the shared lattice point and swallow the entire pulse
budget.  Zero biases keep every layer's point budget on the weights while
exercising the exact same concat-and-split pipeline.
"""

import argparse
import os
import sys

import numpy as np
from scipy import ndimage
from sklearn import datasets

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from pvqnet import (  # noqa: E402
    ACT_RELU,
    Network,
    Tensor,
    evaluate,
    fully_connected,
    input_layer,
    save_network,
)
from pvqnet.idx import write_images, write_labels  # noqa: E402

TRAIN_COUNT = 1497
HIDDEN = 512
EPOCHS = 80
BATCH = 128
LR = 1e-3
# light sparsifying regularization; lattice quantization at ratio 5 costs
# ~6 accuracy points without it and ~2 with it
L1 = 1e-5
L2 = 1e-4
SEED = 20240901


def load_digits_28() -> tuple[np.ndarray, np.ndarray]:
    digits = datasets.load_digits()
    scale = 28 / 8
    images = np.stack([
        ndimage.zoom(img, scale, order=1, prefilter=False)
        for img in digits.images
    ])
    images = np.clip(np.round(images * (255.0 / 16.0)), 0, 255).astype(np.uint8)
    assert images.shape[1:] == (28, 28), images.shape
    return images, digits.target.astype(np.uint8)


def train(x: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> list[np.ndarray]:
    n, d = x.shape
    sizes = [(HIDDEN, d), (HIDDEN, HIDDEN), (10, HIDDEN)]
    params = [rng.standard_normal((rows, cols)) * np.sqrt(2.0 / cols)
              for rows, cols in sizes]
    onehot = np.eye(10)[y]

    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0
    for epoch in range(EPOCHS):
        order = rng.permutation(n)
        for start in range(0, n, BATCH):
            idx = order[start:start + BATCH]
            xb, yb = x[idx], onehot[idx]
            w1, w2, w3 = params

            z1 = xb @ w1.T
            a1 = np.maximum(z1, 0.0)
            z2 = a1 @ w2.T
            a2 = np.maximum(z2, 0.0)
            z3 = a2 @ w3.T
            z3 -= z3.max(axis=1, keepdims=True)
            p = np.exp(z3)
            p /= p.sum(axis=1, keepdims=True)

            g3 = (p - yb) / len(xb)
            g2 = (g3 @ w3) * (z2 > 0)
            g1 = (g2 @ w2) * (z1 > 0)

            step += 1
            grads = [g1.T @ xb, g2.T @ a1, g3.T @ a2]
            for i, g in enumerate(grads):
                g = g + L2 * params[i] + L1 * np.sign(params[i])
                m[i] = 0.9 * m[i] + 0.1 * g
                v[i] = 0.999 * v[i] + 0.001 * (g * g)
                mh = m[i] / (1 - 0.9**step)
                vh = v[i] / (1 - 0.999**step)
                params[i] -= LR * mh / (np.sqrt(vh) + 1e-8)
    return params


def build_network(params: list[np.ndarray]) -> Network:
    w1, w2, w3 = params
    # raw-pixel inputs: fold the 1/255 training normalization into w1,
    # then snap everything to the file's float32 precision
    f32 = lambda a: a.astype(np.float32).astype(np.float64)
    return Network((
        input_layer((784,)),
        fully_connected(HIDDEN, f32(w1 / 255.0), np.zeros(HIDDEN), activation=ACT_RELU),
        fully_connected(HIDDEN, f32(w2), np.zeros(HIDDEN), activation=ACT_RELU),
        fully_connected(10, f32(w3), np.zeros(10)),
    ), name="digits-28 mlp")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default=os.path.join(
        os.path.dirname(__file__), "..", "tests", "fixtures"))
    args = parser.parse_args()

    images, labels = load_digits_28()
    rng = np.random.default_rng(SEED)
    order = rng.permutation(len(images))
    train_idx, test_idx = order[:TRAIN_COUNT], order[TRAIN_COUNT:]
    x_train = images[train_idx].reshape(len(train_idx), -1) / 255.0
    y_train = labels[train_idx]

    params = train(x_train, y_train, rng)
    net = build_network(params)

    test_images, test_labels = images[test_idx], labels[test_idx]
    flat_test = test_images.reshape(len(test_images), -1)
    acc = evaluate(net, (flat_test, test_labels), "float")
    train_acc = evaluate(net, (images[train_idx].reshape(TRAIN_COUNT, -1),
                               labels[train_idx]), "float")
    print(f"train accuracy {100 * train_acc:.2f}%  "
          f"test accuracy {100 * acc:.2f}% over {len(test_labels)} samples")
    if acc < 0.97:
        print("test accuracy below the 97% fixture bar", file=sys.stderr)
        return 1

    os.makedirs(args.out_dir, exist_ok=True)
    save_network(net, os.path.join(args.out_dir, "digits_mlp.pvqnet"))
    write_images(os.path.join(args.out_dir, "digits_test_images.idx.gz"), test_images)
    write_labels(os.path.join(args.out_dir, "digits_test_labels.idx.gz"), test_labels)
    print(f"fixtures written to {args.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
