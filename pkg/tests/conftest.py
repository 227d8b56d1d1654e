import numpy as np
import pytest

from iterdec import codec, metrics, refinement, synth, training

# Frozen desk-scale run shared by the learning-related acceptance criteria.
DESK_DATA_SEED = 31337
DESK_TRAIN_SEED = 1234
DESK_QUALITY = 30


@pytest.fixture(scope="session")
def desk_run():
    """Train the reference delta-RNN once: 20 train images + 5 holdout."""
    rasters = synth.synth_rasters(25, 64, DESK_DATA_SEED)
    train_set, holdout = rasters[:20], rasters[20:]
    cfg = training.TrainConfig(
        kind="delta-rnn",
        hidden=64,
        k=3,
        batch=4,
        epochs=30,
        quality_lo=DESK_QUALITY,
        quality_hi=DESK_QUALITY,
        seed=DESK_TRAIN_SEED,
    )
    result = training.train(train_set, cfg)
    return {
        "config": cfg,
        "result": result,
        "train_set": train_set,
        "holdout": holdout,
        "quality": DESK_QUALITY,
    }


def holdout_psnrs(run, k):
    """(baseline, refined) mean PSNR over the holdout at episode length k."""
    params = run["result"].params
    rcfg = refinement.RefinementConfig(k=k, d=8, corner="top-left", kind=params.kind)
    base, ref = [], []
    for img in run["holdout"]:
        coded = codec.encode_image(img, run["quality"])
        decoded = np.floor(codec.decode_baseline(coded) + 0.5)
        base.append(metrics.psnr(metrics.mse(img, decoded)))
        refined = refinement.reconstruct(coded, params, rcfg)
        ref.append(metrics.psnr(metrics.mse(img, refined.raster_255())))
    return float(np.mean(base)), float(np.mean(ref))
