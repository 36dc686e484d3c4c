# SPDX-License-Identifier: Apache-2.0
"""Smoke tests for the python bindings: the pipeline end to end at toy size."""

import math

import pytest

import ltrsum


@pytest.fixture(scope="module")
def corpus():
    cfg = ltrsum.SynthConfig()
    cfg.doc_len = 72
    return ltrsum.generate_synthetic(seed=1, n_docs=8, cfg=cfg)


def test_tokenize_roundtrip():
    vocab = ltrsum.Vocab(["hello", "world"])
    ids = ltrsum.tokenize("hello world hello", vocab)
    assert len(ids) == 3
    assert ltrsum.detokenize(ids, vocab) == "hello world hello"
    assert ltrsum.tokenize("unseen", vocab) == [ltrsum.Vocab.UNK]


def test_reserved_ids_distinct():
    ids = {ltrsum.Vocab.BOS, ltrsum.Vocab.SEP, ltrsum.Vocab.PAD,
           ltrsum.Vocab.UNK, ltrsum.Vocab.EXTRA}
    assert len(ids) == 5


def test_synthetic_corpus_structure(corpus):
    assert len(corpus.docs) == 8
    for doc in corpus.docs:
        golds = [a for a in doc.alignments if a.p >= 0.6]
        assert len(golds) == 2
        assert doc.reference_summary


def test_segment_label_pipeline(corpus):
    seg_cfg = ltrsum.SegmentationConfig()
    seg_cfg.window_len = 24
    seg_cfg.stride = 12
    doc = corpus.docs[0]
    segments = ltrsum.segment_document(doc, seg_cfg)
    assert segments[0].framed_tokens[0] == ltrsum.Vocab.BOS
    assert all(s.source_end <= len(doc.source) for s in segments)

    labels = ltrsum.label_document(doc, segments, threshold=0.4)
    assert len(labels.labels) == len(segments)
    assert max(labels.labels) > 0


def test_losses_match_hand_values():
    assert ltrsum.softmax_ce_listwise([1.0, 0.0], [0.0, 0.0]) == pytest.approx(
        math.log(2.0), abs=1e-12)
    grad = ltrsum.softmax_ce_grad([1.0, 0.0], [0.0, 0.0])
    assert grad == pytest.approx([-0.5, 0.5], abs=1e-12)
    assert ltrsum.joint_loss(0.7, 0.3, 1.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        ltrsum.softmax_ce_listwise([0.0, 0.0], [1.0, 2.0])


def test_metrics():
    assert ltrsum.dcg([3, 2, 0], 3) == pytest.approx(8.89279, abs=1e-5)
    assert ltrsum.ndcg([0, 1, 2], [3.0, 2.0, 1.0], [2, 1, 0], 3) == pytest.approx(1.0)
    p, r, f1 = ltrsum.rouge([5, 6, 7], [5, 8, 7], "1")
    assert f1 == pytest.approx(2.0 / 3.0)


def test_train_and_rank(corpus, tmp_path):
    seg_cfg = ltrsum.SegmentationConfig()
    seg_cfg.window_len = 24
    seg_cfg.stride = 12

    mcfg = ltrsum.ModelConfig()
    mcfg.d_model = 16
    mcfg.max_positions = 64

    tcfg = ltrsum.TrainConfig()
    tcfg.epochs = 2
    tcfg.batch_size = 4
    tcfg.eval_every = 2
    tcfg.seed = 3
    tcfg.segmentation = seg_cfg
    tcfg.decode_max_len = 8

    model, report = ltrsum.train(corpus, mcfg, tcfg)
    assert len(report.epochs) == 2
    assert math.isfinite(report.epochs[-1].joint_loss)
    # lambda-linearity of logged losses
    em = report.epochs[0]
    assert em.joint_loss == pytest.approx(em.gen_loss + em.ltr_loss, abs=1e-9)

    segments = ltrsum.segment_document(corpus.docs[0], seg_cfg)
    ranked = ltrsum.rank_by_ltr(model, segments)
    assert sorted(ranked.order) == list(range(len(segments)))
    assert ranked.scores == sorted(ranked.scores, reverse=True)

    decoded = model.greedy_decode(segments, max_len=8)
    assert len(decoded) <= 8

    # checkpoint round trip through the file format
    path = str(tmp_path / "model.bin")
    ltrsum.save_checkpoint(path, model, corpus.vocab)
    loaded, vocab = ltrsum.load_checkpoint(path)
    assert vocab.size() == corpus.vocab.size()
    assert loaded.ltr_scores(segments) == model.ltr_scores(segments)

    ev = ltrsum.evaluate_model(model, corpus.docs, tcfg)
    assert 0.0 <= ev.mean_ndcg_ltr <= 1.0
    assert ev.ndcg_docs > 0
