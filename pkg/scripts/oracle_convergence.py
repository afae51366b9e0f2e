"""Grid refinement of the exact two-electron ground-state energy on [-15, 15]^2."""

import argparse
import time

from tdqmc.exact import exact_ground_state
from tdqmc.grid import Grid2D


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--points", default="128,256,512,1024")
    p.add_argument("--extent", type=float, default=15.0)
    args = p.parse_args()
    prev = None
    print("points,energy,delta,seconds")
    for n in (int(v) for v in args.points.split(",")):
        t0 = time.perf_counter()
        e = exact_ground_state(Grid2D.square(-args.extent, args.extent, n)).energy
        delta = "" if prev is None else f"{e - prev:.2e}"
        print(f"{n},{e:.6f},{delta},{time.perf_counter() - t0:.1f}", flush=True)
        prev = e


if __name__ == "__main__":
    main()
