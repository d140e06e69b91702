"""Parse OHLCV rows, fit the min-max scaler and frame sliding windows."""

import numpy as np

from cabxde.dataio import FEATURES, chrono_split, fit_scaler, make_windows, parse_csv, to_csv
from cabxde.synthetic import sine_series

SAMPLE = """Date,Open,High,Low,Volume,Close
10/01/2014,387.427002,391.378998,380.779999,26229400.0,383.614990
10/02/2014,383.988007,385.497009,372.946014,21777700.0,375.071991
10/03/2014,375.181000,377.695007,357.859009,30901200.0,359.511993
10/04/2014,359.891998,364.487000,325.885986,47236500.0,328.865997
10/05/2014,328.915985,341.800995,289.295990,83308096.0,320.510010
"""


def main():
    # Five daily rows in the usual Yahoo-style column order
    ds = parse_csv(SAMPLE)
    print(f"{len(ds)} rows from {ds.dates[0]} to {ds.dates[-1]}")

    # 80/20 chronological split: the scaler only ever sees the first part
    train, test = chrono_split(ds, 0.8)
    params = fit_scaler(train, ["close"])
    print("close range on train rows:", params.v_min, params.v_max)
    print("scaled test close:", params.scale(test[0].close, "close"))  # may fall outside [0, 1]

    # Windows of two days predicting the next close
    scaled = fit_scaler(ds, FEATURES).transform(ds.matrix())
    windows = make_windows(scaled, time_step=2)
    for w in windows:
        print(f"target row {w.target_row}: inputs {w.inputs.shape}, target {w.target:.4f}")

    # A longer synthetic series round-trips through CSV text unchanged
    series = sine_series(300, seed=0)
    again = parse_csv(to_csv(series))
    assert again.records == series.records
    print("round-trip ok;", np.round(series.column("close")[:5], 3))


if __name__ == "__main__":
    main()
