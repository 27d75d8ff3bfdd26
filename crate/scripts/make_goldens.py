#!/usr/bin/env python3
"""Regenerate the golden test fixtures in crates/logsphere/tests/fixtures/.

Clustering goldens come from scikit-learn's HDBSCAN; the PCA golden holds
explained variances from numpy's dense eigensolver. Both act as independent
reference implementations for the Rust test suite.
"""
import json
import pathlib

import numpy as np
from sklearn.cluster import HDBSCAN

OUT = pathlib.Path(__file__).resolve().parent.parent / "crates/logsphere/tests/fixtures"
OUT.mkdir(parents=True, exist_ok=True)


def dump(name, obj):
    (OUT / name).write_text(json.dumps(obj))
    print("wrote", name)


def hdbscan_case(name, pts, mcs=5, ms=5):
    labels = HDBSCAN(min_cluster_size=mcs, min_samples=ms).fit_predict(pts)
    dump(
        name,
        {
            "points": [[float(x) for x in p] for p in pts],
            "min_cluster_size": mcs,
            "min_samples": ms,
            "labels": [int(l) for l in labels],
        },
    )
    print("  clusters:", sorted(set(labels.tolist())))


rng = np.random.default_rng(20240824)

# two well-separated gaussian blobs
blob_a = rng.normal([0.0, 0.0], 0.4, size=(30, 2))
blob_b = rng.normal([20.0, 20.0], 0.4, size=(30, 2))
hdbscan_case("hdbscan_two_blobs.json", np.vstack([blob_a, blob_b]))

# one blob plus a far isolated point
blob = rng.normal([0.0, 0.0], 0.5, size=(40, 2))
outlier = np.array([[50.0, 50.0]])
hdbscan_case("hdbscan_blob_outlier.json", np.vstack([blob, outlier]))

# uniform noise (separate stream; this seed avoids tie-boundary points whose
# cluster membership is implementation-order dependent)
noise = np.random.default_rng(1).uniform(0.0, 10.0, size=(60, 2))
hdbscan_case("hdbscan_uniform_noise.json", noise)

# PCA oracle: 200 random 50-D points, top-8 explained variances via numpy
pts = rng.normal(0.0, 1.0, size=(200, 50)) @ rng.normal(0.0, 0.3, size=(50, 50))
cov = np.cov(pts, rowvar=False)
eigvals = np.sort(np.linalg.eigvalsh(cov))[::-1]
dump(
    "pca_oracle.json",
    {
        "points": [[float(x) for x in p] for p in pts],
        "d_abs": 8,
        "explained_variance": [float(v) for v in eigvals[:8]],
    },
)
