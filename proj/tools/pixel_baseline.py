"""Per-pixel gradient-boosting baseline on a generated corpus.

Each pixel is classified independently from its raw base descriptors (all
groups concatenated) plus its normalized position, with scikit-learn's
histogram gradient boosting. Used to calibrate the benchmark accuracy
threshold in tests/fixtures/benchmark.json.

    python tools/pixel_baseline.py TRAIN_DIR TEST_DIR [--iterations 150]
"""

import argparse
import json
import pathlib

import numpy as np
from sklearn.ensemble import HistGradientBoostingClassifier


def load(directory):
    directory = pathlib.Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    xs, ys = [], []
    for entry in manifest["files"]:
        scene = json.loads((directory / entry["name"]).read_text())
        w, h = scene["width"], scene["height"]
        cols = [np.asarray(g["values"]).reshape(w * h, g["dim"]) for g in scene["base_features"]]
        yy, xx = np.divmod(np.arange(w * h), w)
        cols.append(np.stack([(xx + 0.5) / w, (yy + 0.5) / h], axis=1))
        xs.append(np.hstack(cols))
        ys.append(np.asarray(scene["label_map"]))
    return np.vstack(xs), np.concatenate(ys)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("train")
    parser.add_argument("test")
    parser.add_argument("--iterations", type=int, default=150)
    parser.add_argument("--max-samples", type=int, default=200000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    x_train, y_train = load(args.train)
    x_test, y_test = load(args.test)
    rng = np.random.default_rng(args.seed)
    if len(y_train) > args.max_samples:
        keep = rng.choice(len(y_train), args.max_samples, replace=False)
        x_train, y_train = x_train[keep], y_train[keep]
    model = HistGradientBoostingClassifier(max_iter=args.iterations, random_state=args.seed)
    model.fit(x_train, y_train)
    pred = model.predict(x_test)
    classes = np.unique(y_test)
    recall = [float(np.mean(pred[y_test == k] == k)) for k in classes]
    majority = float(np.max(np.bincount(y_test)) / len(y_test))
    print(json.dumps({
        "pixel_accuracy": float(np.mean(pred == y_test)),
        "class_accuracy": float(np.mean(recall)),
        "majority_class_accuracy": majority,
        "train_pixels": int(len(y_train)),
        "iterations": args.iterations,
    }, indent=1))


if __name__ == "__main__":
    main()
