"""Fuse two forecasts by reciprocal-error weights and by stacking."""

import numpy as np

from cabxde.ensemble import fit_stacking, reciprocal_weights, weighted_combine
from cabxde.metrics import evaluate, format_table


def main():
    # A model with the larger error gets the smaller weight
    w = reciprocal_weights(0.5748, 0.4252)
    print(f"w_bl = {w.w_bl:.4f}, w_xg = {w.w_xg:.4f}")

    rng = np.random.default_rng(2)
    truth = 30_000 + np.cumsum(rng.normal(0, 150, 250))
    p_bl = truth + rng.normal(40, 120, 250)  # biased and noisy
    p_xg = truth + rng.normal(0, 90, 250)

    fit_part, hold = slice(0, 150), slice(150, None)
    mape_bl = evaluate("bilstm", truth[fit_part], p_bl[fit_part]).mape
    mape_xg = evaluate("gbdt", truth[fit_part], p_xg[fit_part]).mape
    weights = reciprocal_weights(mape_bl, mape_xg)
    stack = fit_stacking(p_bl[fit_part], p_xg[fit_part], truth[fit_part])
    print(f"stacking: {stack.intercept:.2f} + {stack.coef_bl:.4f}*bl + {stack.coef_xg:.4f}*xg")

    results = [
        evaluate("bilstm", truth[hold], p_bl[hold]),
        evaluate("gbdt", truth[hold], p_xg[hold]),
        evaluate("reciprocal", truth[hold], weighted_combine(p_bl[hold], p_xg[hold], weights)),
        evaluate("stacking", truth[hold], stack.predict(p_bl[hold], p_xg[hold])),
    ]
    print(format_table(results))


if __name__ == "__main__":
    main()
