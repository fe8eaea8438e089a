"""Regenerate the bundled synthetic 168-site volcano catalog.

Coordinates are stand-ins: most sites fall within +/-30 deg latitude, the
rest are spread to +/-65 deg. Run from the repo root:

    python scripts/make_catalog.py > src/aerobot/data/large_volcanoes.csv
"""

import sys

import numpy as np

N_SITES = 168
LOW_LAT_FRACTION = 0.75


def main(seed=1992):
    rng = np.random.default_rng(seed)
    n_low = int(round(N_SITES * LOW_LAT_FRACTION))
    # area-uniform latitude within each band
    lat_low = np.degrees(np.arcsin(rng.uniform(-0.5, 0.5, n_low)))
    hi = np.sin(np.radians(65.0))
    mag = np.degrees(np.arcsin(rng.uniform(0.5, hi, N_SITES - n_low)))
    lat_high = mag * rng.choice([-1.0, 1.0], N_SITES - n_low)
    lats = np.concatenate([lat_low, lat_high])
    lons = rng.uniform(-180.0, 180.0, N_SITES)
    order = np.argsort(lons)
    out = sys.stdout
    out.write("id,lon_deg,lat_deg,size\n")
    for k, i in enumerate(order):
        out.write(f"V{k + 1:03d},{lons[i]:.3f},{lats[i]:.3f},large\n")


if __name__ == "__main__":
    main()
