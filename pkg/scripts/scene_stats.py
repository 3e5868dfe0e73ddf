#!/usr/bin/env python3
"""Overlap, clutter and occlusion of every pair in a manifest, with bucket labels."""

import argparse

from featbench.bench import compute_clutter_occlusion, compute_overlap
from featbench.io import bucket_label, load_manifest, load_pair


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("manifest")
    args = ap.parse_args()
    m = load_manifest(args.manifest)
    print("pair,overlap,overlap_group,clutter,clutter_group,occlusion,occlusion_group")
    for entry in m.pairs:
        s, t, T = load_pair(entry)
        ov = compute_overlap(s, t, T)
        cl, oc = compute_clutter_occlusion(s, t, T)
        print(f"{entry.label},{ov:.4f},{bucket_label('overlap', ov)},{cl:.4f},"
              f"{bucket_label('clutter', cl)},{oc:.4f},{bucket_label('occlusion', oc)}")


if __name__ == "__main__":
    main()
