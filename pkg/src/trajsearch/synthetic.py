"""Synthetic clustered GPS datasets for experiments and end-to-end tests.

Generates well-separated spatial clusters of random-walk trajectories around
a configurable geographic origin. Cluster spacing is much larger than the
within-cluster spread, so ground-truth nearest neighbors are almost always
cluster-mates and retrieval quality is a meaningful signal.
"""

import math

import numpy as np

from .ingest import M_PER_DEG_LAT, M_PER_DEG_LON, Trajectory


def make_cluster_dataset(n_clusters=3, per_cluster=100, seed=0, n_points=60,
                         origin_lon=-8.65, origin_lat=41.10,
                         cluster_spacing_m=40000.0, anchor_std_m=2000.0,
                         step_m=80.0):
    """Random-walk trajectories in n_clusters well-separated spatial clusters.

    Cluster centers sit on a circle of radius cluster_spacing_m around the
    origin; each trajectory starts at a Gaussian offset (anchor_std_m) from
    its center and random-walks with momentum in ~step_m increments.
    """
    rng = np.random.default_rng(seed)
    coslat = math.cos(math.radians(origin_lat))
    to_deg = np.array([1.0 / (M_PER_DEG_LON * coslat), 1.0 / M_PER_DEG_LAT])

    centers = []
    for c in range(n_clusters):
        ang = 2.0 * math.pi * c / n_clusters
        centers.append(np.array([cluster_spacing_m * math.cos(ang),
                                 cluster_spacing_m * math.sin(ang)]))

    trajs = []
    for c, center in enumerate(centers):
        for t in range(per_cluster):
            anchor = center + rng.normal(0.0, anchor_std_m, size=2)
            heading = rng.uniform(0.0, 2.0 * math.pi)
            pos = anchor.copy()
            pts = [pos.copy()]
            for _ in range(n_points - 1):
                heading += rng.normal(0.0, 0.35)
                step = step_m * (1.0 + 0.3 * rng.standard_normal())
                pos = pos + step * np.array([math.cos(heading), math.sin(heading)])
                pts.append(pos.copy())
            meters = np.array(pts)
            lonlat = np.column_stack([
                origin_lon + meters[:, 0] * to_deg[0],
                origin_lat + meters[:, 1] * to_deg[1],
            ])
            trajs.append(Trajectory(id=f"c{c}_{t:03d}", points=lonlat))
    return trajs
