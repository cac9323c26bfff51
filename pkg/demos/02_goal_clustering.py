"""Grouping replay episodes by where they ended up.

Random pushing rarely moves the box, so most episodes finish near the box's
start and a few travel further. The clusterer fits k-means to goals the agent
failed to reach. Each time the failed-goal buffer turns over completely it
refits and re-buckets every stored episode by its final achieved goal.
"""

import numpy as np

from hercs.cluster import GoalClusterer, is_partition
from hercs.envs import make_env
from hercs.replay import EpisodeBuffer, EpisodeRecorder

env = make_env("push2d", seed=0)
replay = EpisodeBuffer(env.spec, capacity=300)
clusterer = GoalClusterer(k=4, fgb_capacity=100, rng=0)
rng = np.random.default_rng(0)

for n in range(1, 401):
    rec = EpisodeRecorder(env.reset())
    for _ in range(env.spec.horizon):
        a = rng.uniform(-env.spec.action_bound, env.spec.action_bound, size=2)
        rec.add(a, env.step(a))
    episode = rec.finish()
    replay.store_episode(episode)
    if clusterer.observe(episode, replay):
        print(f"after {n} episodes: refit to version {clusterer.model.version}, "
              f"bucket sizes {clusterer.index.sizes}")

print("centroids:\n", np.round(clusterer.model.centroids, 3))
print("index covers every live episode exactly once:", is_partition(clusterer.index, replay.ids))
