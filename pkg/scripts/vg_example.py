#!/usr/bin/env python3
"""Visibility graph of one training section and its six metrics."""

import argparse
import json

from dyrc.dynamics import DUFFING_SETS, SimConfig, integrate, split
from dyrc.graphs import metrics, sample_sections, scale_to_spectral_radius, section_slice, visibility_graph


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--set", type=int, default=1)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--stride", type=int, default=1)
    a = p.parse_args()
    train, _ = split(integrate(DUFFING_SETS[a.set], SimConfig()))
    sec = sample_sections(len(train), a.points, a.stride, 1)[0]
    sl = section_slice(sec)
    g = scale_to_spectral_radius(visibility_graph(train.q[sl], train.t[sl]), 0.9)
    print(json.dumps({"section": [sec.start, sec.stride, sec.length], **metrics(g).as_dict()}, indent=2))


if __name__ == "__main__":
    main()
