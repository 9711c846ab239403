import numpy as np
import pytest

from charcap.corpus import CorpusConfig, generate_corpus, planted_alpha_targets
from charcap.linker import (
    Linker, LinkerConfig, build_attention_gt, build_link_instances,
    init_linker_params, link_scores, linker_loss, linking_accuracy,
    train_linker,
)
from charcap.numerics import finite_diff_check, rng_stream
from charcap.track_features import fit_norm_stats


def corpus_cfg(**kw):
    base = dict(n_pairs=60, n_characters=6, d_head=16, d_body=8, d_global=8,
                sigma=0.0, singleton_fraction=0.2)
    base.update(kw)
    return CorpusConfig(**base)


@pytest.fixture(scope="module")
def trained():
    corpus = generate_corpus(corpus_cfg(n_pairs=110), seed=7)
    train, test = corpus.split(80)
    linker = train_linker(train, LinkerConfig(epochs=50), seed=3)
    return linker, train, test


class TestForward:
    def test_single_track_attention_is_one(self):
        cfg = LinkerConfig(d_emb=4, hidden=5, scorer_hidden=4, recon_hidden=4)
        params = init_linker_params(cfg, n_names=3, d_head=6, seed=0)
        att, _ = link_scores(params, cfg, 0, 2, np.ones((1, 6)))
        np.testing.assert_allclose(att, [1.0])

    def test_untrained_distribution_normalized(self):
        cfg = LinkerConfig(d_emb=4, hidden=5, scorer_hidden=4, recon_hidden=4)
        params = init_linker_params(cfg, n_names=3, d_head=6, seed=1)
        rng = rng_stream(2, "feat")
        att, _ = link_scores(params, cfg, 1, 3, rng.normal(size=(7, 6)))
        assert abs(att.sum() - 1.0) <= 1e-9
        assert (att >= 0).all()

    def test_empty_track_list_rejected(self):
        cfg = LinkerConfig()
        params = init_linker_params(cfg, n_names=2, d_head=4, seed=0)
        with pytest.raises(ValueError):
            link_scores(params, cfg, 0, 2, np.zeros((0, 4)))


class TestGradients:
    def test_matches_finite_differences(self):
        corpus = generate_corpus(corpus_cfg(n_pairs=3, sigma=0.3), seed=1)
        norm = fit_norm_stats([t for c in corpus.clips for t in c.tracks])
        insts = build_link_instances(corpus, norm)[:4]
        cfg = LinkerConfig(d_emb=5, hidden=6, scorer_hidden=5, recon_hidden=5)
        name_ids = sorted({i.name_id for i in insts})
        rows = {n: 2 + k for k, n in enumerate(name_ids)}
        idx = {n: k for k, n in enumerate(name_ids)}
        params = init_linker_params(cfg, len(name_ids), 16, seed=0)
        err = finite_diff_check(
            lambda p: linker_loss(p, cfg, insts, rows, idx), params,
            max_coords_per_array=6)
        assert err <= 1e-4


class TestTraining:
    def test_noiseless_linking_matches_plant(self, trained):
        linker, train, test = trained
        assert linking_accuracy(linker, test) >= 0.99

    def test_loss_nonincreasing_small_step_full_batch(self):
        corpus = generate_corpus(corpus_cfg(n_pairs=12), seed=5)
        cfg = LinkerConfig(optimizer="sgd", lr=0.05, epochs=15, batch_size=0)
        linker = train_linker(corpus, cfg, seed=1)
        diffs = np.diff(linker.history)
        assert (diffs <= 1e-6).all()

    def test_shuffled_features_are_chance_level(self, trained):
        linker, train, test = trained
        rng = rng_stream(9, "shuffle")
        hits, n, inv_c = 0, 0, 0.0
        insts = build_link_instances(test, linker.norm)
        for inst in insts:
            c = len(inst.track_ids)
            if c < 2 or not inst.gt_track_ids:
                continue
            # features no longer describe their tracks: position argmax is
            # right only when the permutation fixes the ground-truth row
            perm = rng.permutation(c)
            att = linker.attention(inst.gender, inst.name_id, inst.features[perm])
            chosen = inst.track_ids[int(np.argmax(att))]
            hits += chosen in inst.gt_track_ids
            n += 1
            inv_c += 1.0 / c
        acc = hits / n
        assert acc < 0.55
        assert abs(acc - inv_c / n) < 0.25

    def test_no_singletons_warns(self):
        corpus = generate_corpus(corpus_cfg(n_pairs=8, singleton_fraction=0.0,
                                            max_distractors=2), seed=11)
        # force multi-track clips so no singleton condition holds
        eligible = all(len(c.tracks) > 1 or len(c.mentions) != 1
                       for c in corpus.clips)
        if not eligible:
            for c in corpus.clips:
                if len(c.tracks) == 1:
                    c.tracks = c.tracks * 1  # keep: filtered below
            corpus.pairs = [p for p in corpus.pairs
                            if len(p.prev.tracks) > 1 and len(p.cur.tracks) > 1]
        with pytest.warns(UserWarning, match="unsupervised"):
            train_linker(corpus, LinkerConfig(epochs=1), seed=0)

    def test_unknown_character_rejected(self, trained):
        linker, _, _ = trained
        with pytest.raises(KeyError):
            linker.attention("M", 999_999, np.zeros((2, 16)))


class TestAttentionGt:
    def test_matches_planted_truth_at_zero_noise(self, trained):
        linker, train, test = trained
        sup = build_attention_gt(linker, test)
        by_id = {s.pair_id: s for s in sup}
        for pair in test.pairs:
            want = {t.tau: t for t in planted_alpha_targets(pair)}
            got = {t.tau: t for t in by_id[pair.id].targets}
            assert set(got) == set(want)
            for tau in want:
                assert got[tau].c == want[tau].c
                assert got[tau].p == want[tau].p

    def test_new_character_targets_null(self, trained):
        linker, train, test = trained
        sup = build_attention_gt(linker, test)
        by_id = {s.pair_id: s for s in sup}
        checked = 0
        for pair in test.pairs:
            targets = {t.tau: t for t in by_id[pair.id].targets}
            for m in pair.cur.mentions:
                if m.coref_prev is None and m.pos in targets:
                    assert targets[m.pos].p == 0
                    checked += 1
        assert checked > 0

    def test_reappearing_character_targets_previous_track(self, trained):
        linker, train, test = trained
        sup = build_attention_gt(linker, test)
        by_id = {s.pair_id: s for s in sup}
        checked = 0
        for pair in test.pairs:
            s = by_id[pair.id]
            targets = {t.tau: t for t in s.targets}
            for m in pair.cur.mentions:
                if m.coref_prev is not None and m.pos in targets:
                    p = targets[m.pos].p
                    assert p >= 1
                    assert s.prev_grounding[p - 1][1] == m.coref_prev
                    checked += 1
        assert checked > 0
