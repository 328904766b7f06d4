"""Train two small byte-level models on the bundled corpus and compare them.

Takes about a minute on one core. The four small cells leave the unigram
plateau a few epochs later than the single cell.
"""
# %%
from pathlib import Path

from pcrnn import (LMModel, ModelConfig, Rng, TrainConfig, ensemble_eval, evaluate,
                   init_params, mask_sweep, perplexity, train)
from pcrnn.data import load_ids

EPOCHS = 6
corpus = Path(__file__).resolve().parent.parent / "tests" / "data" / "desk_corpus.txt"
ids = load_ids(corpus, "byte")
train_ids, valid_ids, test_ids = ids[:85000], ids[85000:90000], ids[90000:]

cfg = TrainConfig(base_lr=10.0, clip_threshold=0.5, init_range=0.1, warm_epochs=EPOCHS,
                  total_epochs=EPOCHS, dropout_rate=0.0)

# %% [markdown]
# Same width, same recipe: one 64-unit cell per layer against four 16-unit cells.

# %%
models = {}
for wide in (1, 4):
    mc = ModelConfig(vocab_size=257, hidden=64, layers=2, wide=wide, tokenize="byte", eos=False)
    rng = Rng(1)
    model = init_params(LMModel(mc), cfg.init_range, rng)
    model, hist = train(model, train_ids, valid_ids, cfg, rng)
    models[wide] = model
    print(f"wide={wide}: {model.recurrent_param_count()} recurrent params, "
          f"valid ppl by epoch {[round(h.valid_ppl, 2) for h in hist]}, "
          f"test ppl {perplexity(evaluate(model, test_ids, 20, 35)):.3f}")

# %% [markdown]
# Which of the four cells does the model lean on? Mask each in turn.

# %%
report = mask_sweep(models[4], test_ids, 20, 35)
for row, vals in zip(report.rows, report.values):
    print(f"{row:>18}: {vals[0]:.3f}")

# %% [markdown]
# Averaging the two models' predicted distributions.

# %%
print("ensemble ppl:", round(ensemble_eval(list(models.values()), test_ids, 20, 35), 3))
