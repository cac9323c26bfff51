"""What a training batch looks like under each stage-1 rule.

Stage 1 chooses episodes, stage 2 a step inside each, stage 3 swaps in a
later achieved goal with probability future_p. Cluster sampling gives every
bucket an equal share of the batch. Energy sampling prefers episodes whose
achieved goal moved a lot.
"""

import numpy as np

from hercs.cluster import GoalClusterer
from hercs.envs import make_env
from hercs.replay import EpisodeBuffer, EpisodeRecorder
from hercs.sampling import ALGOS, BatchSampler, SamplerConfig, cluster_quotas

print("quotas for batch 10 over sizes (5, 0, 7, 2):", cluster_quotas([5, 0, 7, 2], 10))

env = make_env("push2d", seed=1)
replay = EpisodeBuffer(env.spec, capacity=400)
clusterer = GoalClusterer(k=4, fgb_capacity=50, rng=1)
rng = np.random.default_rng(1)
for _ in range(400):
    rec = EpisodeRecorder(env.reset())
    for _ in range(env.spec.horizon):
        a = rng.uniform(-0.05, 0.05, size=2)
        rec.add(a, env.step(a))
    ep = rec.finish()
    replay.store_episode(ep)
    clusterer.observe(ep, replay)

energy = replay.energies[: len(replay)]
print(f"episode energy: median {np.median(energy):.2e}, max {energy.max():.2e}")

for algo in ALGOS:
    sampler = BatchSampler(SamplerConfig(algo, batch_size=256), replay, clusterer)
    batch = sampler.sample(np.random.default_rng(0))
    buckets = np.bincount([clusterer.index.bucket_of(int(e)) for e in batch.episode_ids], minlength=4)
    chosen = replay.energies[replay.slot(batch.episode_ids)]
    print(f"{algo:11s} relabeled {batch.relabeled.mean():.2f}  successes {np.mean(batch.rewards == 0):.2f}  "
          f"per-bucket {buckets.tolist()}  mean energy {chosen.mean():.2e}")
