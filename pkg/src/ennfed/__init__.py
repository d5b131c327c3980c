"""ennfed: learned gradient-update compression for federated learning.

Subpackages:
  layers/model/optim/losses/rng -- minimal numpy neural-net engine
  enn        -- the update compressor (encoder/decoder) and its training
  fed        -- deterministic federated simulation
  mnist      -- MNIST task: IDX loading, non-IID partition, task CNN
  io_config  -- experiment config, metrics CSV, binary checkpoints
  cli        -- reproduction command line
"""

__version__ = "0.1.0"
