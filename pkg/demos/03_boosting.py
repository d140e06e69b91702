"""Grow second-order boosted trees and watch the regularised objective."""

import numpy as np

from cabxde.gbdt import GbdtConfig, fit, leaf_weight, split_gain


def main():
    # Closed forms first
    print("leaf weight for G=-10, H=1, lambda=1:", leaf_weight(-10.0, 1.0, 1.0))
    print("gain of a clean two-way split:", split_gain(-10.0, 5.0, 10.0, 5.0, 0.0, 0.0))
    print("same split with alpha=10 soft-thresholding:", split_gain(-10.0, 5.0, 10.0, 5.0, 0.0, 0.0, alpha=10.0))

    rng = np.random.default_rng(1)
    X = rng.uniform(-3, 3, (500, 4))
    y = 1000 * (np.sin(X[:, 0]) + 0.5 * X[:, 1] ** 2 - X[:, 2]) + rng.normal(0, 300, 500)

    model = fit(X, y, GbdtConfig(n_estimators=100))
    hist = model.history
    print(f"{len(model.trees)} trees, base score {model.base_score:.2f}")
    for h in hist[:3] + hist[-2:]:
        print(f"round {h['round']:>3}: leaves {h['n_leaves']:>3}  mse {h['train_mse']:>12.1f}  objective {h['objective']:.6g}")

    # The same penalties on targets a thousand times smaller stop early:
    # gamma and alpha are absolute amounts, not fractions
    small = fit(X, y / 1000, GbdtConfig(n_estimators=100))
    print(f"unit-scale targets keep {len(small.trees)} of 100 rounds")


if __name__ == "__main__":
    main()
