from mtsent.corpus import LabelScale, coarsen_label
from mtsent.synthetic import make_corpus


def test_sizes_and_scales():
    c = make_corpus(n_fine=50, n_ternary=40, n_dev=10, vocab_size=200, seed=0)
    assert (len(c.fine_train), len(c.ternary_train), len(c.fine_dev)) == (50, 40, 10)
    assert c.fine_train.scale is LabelScale.FINE_GRAINED
    assert c.ternary_train.scale is LabelScale.TERNARY
    assert len(c.vocab) == 200


def test_noise_only_on_ternary():
    c = make_corpus(n_fine=0, n_ternary=2000, n_dev=0, ternary_noise=0.3, seed=1)
    agree = 0
    for ex in c.ternary_train.examples:
        levels = [c.polarity[t] for t in ex.tweet.tokens if c.polarity[t] is not None]
        if levels:
            # the most frequent level word is the best guess of the latent score
            guess = max(set(levels), key=levels.count)
            agree += coarsen_label(guess) == ex.label
    assert 0.4 < agree / 2000 < 0.8


def test_noise_free_ternary_is_coarsened_fine():
    # every token carries the latent level, so the label is recoverable from any token
    c = make_corpus(n_fine=200, n_ternary=200, n_dev=0, ternary_noise=0.0, p_sent=1.0, p_near=0.0, seed=2)
    for ex in c.fine_train.examples:
        assert {c.polarity[t] for t in ex.tweet.tokens} == {ex.label}
    for ex in c.ternary_train.examples:
        assert {coarsen_label(c.polarity[t]) for t in ex.tweet.tokens} == {ex.label}


def test_seeded():
    a = make_corpus(n_fine=20, n_ternary=20, n_dev=5, seed=3)
    b = make_corpus(n_fine=20, n_ternary=20, n_dev=5, seed=3)
    assert a.fine_train == b.fine_train and a.ternary_train == b.ternary_train
