"""Train the small network on clean data and test it on low- and
high-passed copies of the test set (a reduced bias report).

Run with ``python demos/03_band_accuracy.py`` (about a minute).
"""

# %%
from freqbias.pipelines import RunConfig, bias_report, load_splits

cfg = RunConfig(synthetic=True, per_class=100, test_per_class=50, epochs=8)
train_set, test_set = load_splits(cfg)
rep = bias_report(train_set, test_set, cfg)

# %%
print(rep.log.to_csv())
print("clean accuracy", rep.clean_accuracy)
print(rep.to_csv())
print("Spearman(variance, accuracy) =", round(rep.spearman, 3))
