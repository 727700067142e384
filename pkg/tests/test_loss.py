import numpy as np
import pytest

from moama import autodiff as ad
from moama import morgan_fingerprint, parse
from moama.loss import LossConfig, aux_loss, rec_loss, total_loss

from conftest import fd_gradient


def _single_dim(logit_rows, codes, cfg, n_classes=119):
    logits = {"atom_type": ad.parameter(np.asarray(logit_rows, dtype=float))}
    x_true = np.zeros((len(codes), 2), dtype=np.int64)
    x_true[:, 0] = codes
    masked = (list(range(len(codes))), [])
    return rec_loss(logits, x_true, masked, cfg)


def test_sce_perfect_direction_zero():
    cfg = LossConfig(rec_kind="sce", gamma=1.0)
    row = np.zeros(119)
    row[7] = 2.5  # any positive multiple of the one-hot target
    lossv, n = _single_dim([row], [7], cfg)
    assert n == 1
    assert lossv.item() == pytest.approx(0.0, abs=1e-9)


def test_sce_orthogonal_row_gamma_one_is_one():
    cfg = LossConfig(rec_kind="sce", gamma=1.0)
    row = np.zeros(119)
    row[3] = 1.0
    lossv, _ = _single_dim([row], [7], cfg)
    assert lossv.item() == pytest.approx(1.0)


def test_sce_invariant_to_positive_rescale():
    cfg = LossConfig(rec_kind="sce", gamma=2.0)
    rng = np.random.default_rng(0)
    rows = rng.normal(size=(4, 119))
    l1, _ = _single_dim(rows, [5, 9, 0, 118], cfg)
    l2, _ = _single_dim(rows * 3.7, [5, 9, 0, 118], cfg)
    assert l1.item() == pytest.approx(l2.item(), rel=1e-12)


def test_ce_certain_true_class_zero():
    cfg = LossConfig(rec_kind="ce")
    row = np.full(119, -1000.0)
    row[11] = 1000.0
    lossv, _ = _single_dim([row], [11], cfg)
    assert lossv.item() == pytest.approx(0.0, abs=1e-12)


def test_mse_exact_onehot_zero():
    cfg = LossConfig(rec_kind="mse")
    row = np.full(119, -1000.0)
    row[4] = 1000.0
    lossv, _ = _single_dim([row], [4], cfg)
    assert lossv.item() == pytest.approx(0.0, abs=1e-12)


def test_all_losses_nonnegative_random():
    rng = np.random.default_rng(1)
    for kind in ("sce", "ce", "mse"):
        cfg = LossConfig(rec_kind=kind)
        rows = rng.normal(size=(6, 119))
        lossv, _ = _single_dim(rows, rng.integers(0, 119, size=6), cfg)
        assert lossv.item() >= 0.0


def test_empty_masked_set_returns_zero_flag():
    cfg = LossConfig()
    logits = {"atom_type": ad.const(np.zeros((3, 119)))}
    lossv, n = rec_loss(logits, np.zeros((3, 2), dtype=np.int64), ([], []), cfg)
    assert n == 0
    assert lossv.item() == 0.0


def test_two_decoder_loss_is_average_one_decoder_is_sum():
    rng = np.random.default_rng(2)
    atom_rows = rng.normal(size=(3, 119))
    chir_rows = rng.normal(size=(3, 4))
    x_true = np.zeros((3, 2), dtype=np.int64)
    x_true[:, 0] = [1, 2, 3]
    x_true[:, 1] = [0, 1, 2]
    masked = ([0, 1, 2], [0, 1, 2])
    logits = {"atom_type": ad.const(atom_rows), "chirality": ad.const(chir_rows)}
    two = rec_loss(logits, x_true, masked, LossConfig(targets="both_two_decoders"))[0]
    one = rec_loss(logits, x_true, masked, LossConfig(targets="both_one_decoder"))[0]
    la = rec_loss({"atom_type": ad.const(atom_rows)}, x_true, masked, LossConfig())[0]
    lc = rec_loss({"chirality": ad.const(chir_rows)}, x_true, masked,
                  LossConfig(targets="chirality"))[0]
    assert two.item() == pytest.approx(0.5 * (la.item() + lc.item()))
    assert one.item() == pytest.approx(la.item() + lc.item())


def test_rec_loss_gradients_match_fd():
    rng = np.random.default_rng(3)
    codes = rng.integers(0, 119, size=5)
    x_true = np.zeros((5, 2), dtype=np.int64)
    x_true[:, 0] = codes
    masked = (list(range(5)), [])
    for kind in ("sce", "ce", "mse"):
        cfg = LossConfig(rec_kind=kind, gamma=1.0 if kind != "sce" else 2.0)
        rows = rng.normal(size=(5, 119))

        def build():
            logits = {"atom_type": param}
            return rec_loss(logits, x_true, masked, cfg)[0]

        param = ad.parameter(rows)
        out = build()
        out.backward()
        flat_vals = param.values.reshape(-1)
        flat_grad = param.grad.reshape(-1)
        for _ in range(8):
            i = int(rng.integers(flat_vals.size))
            fd = fd_gradient(lambda: build().item(), flat_vals, i)
            assert flat_grad[i] == pytest.approx(fd, rel=1e-4, abs=1e-8), kind


def test_aux_identical_molecules_identical_embeddings_zero():
    g = parse("CCO")
    fps = [morgan_fingerprint(g), morgan_fingerprint(g)]
    h = ad.const(np.tile(np.array([1.0, 2.0, 3.0]), (2, 1)))
    lossv, pairs = aux_loss(h, fps, LossConfig())
    assert pairs == 1
    assert lossv.item() == pytest.approx(0.0, abs=1e-12)


def test_aux_matching_similarity_zero_term():
    # cosine of the two rows is 0.5; fingerprints engineered to tanimoto 0.5
    from moama.fingerprint import Fingerprint

    fa = Fingerprint(0b0011, 16, 2)
    fb = Fingerprint(0b0110, 16, 2)  # intersection 1, union 3
    fc = Fingerprint(0b0011, 16, 2)
    h = ad.const(np.array([[1.0, 0.0], [0.5, np.sqrt(3) / 2]]))  # cos = 0.5
    lossv, _ = aux_loss(h, [fa, fc], LossConfig())  # tanimoto 1 vs cos 0.5
    assert lossv.item() == pytest.approx(0.25)
    h2 = ad.const(np.array([[1.0, 0.0], [1.0, 0.0]]))
    lossv2, _ = aux_loss(h2, [fa, fb], LossConfig())  # tanimoto 1/3 vs cos 1
    assert lossv2.item() == pytest.approx((1.0 / 3.0 - 1.0) ** 2)


def test_aux_three_graph_batch_matches_pair_oracle():
    rng = np.random.default_rng(4)
    graphs = [parse(s) for s in ("CCO", "CCN", "c1ccccc1")]
    fps = [morgan_fingerprint(g) for g in graphs]
    h = rng.normal(size=(3, 8))
    from moama.fingerprint import tanimoto

    expected_terms = []
    for i in range(3):
        for j in range(i + 1, 3):
            cos = h[i] @ h[j] / (np.linalg.norm(h[i]) * np.linalg.norm(h[j]))
            expected_terms.append((tanimoto(fps[i], fps[j]) - cos) ** 2)
    lossv, pairs = aux_loss(ad.const(h), fps, LossConfig())
    assert pairs == 3
    assert lossv.item() == pytest.approx(np.mean(expected_terms), rel=1e-9)


def test_aux_raw_difference_mode():
    rng = np.random.default_rng(5)
    graphs = [parse(s) for s in ("CCO", "CCN", "c1ccccc1")]
    fps = [morgan_fingerprint(g) for g in graphs]
    h = rng.normal(size=(3, 8))
    from moama.fingerprint import tanimoto

    expected = []
    for i in range(3):
        for j in range(i + 1, 3):
            cos = h[i] @ h[j] / (np.linalg.norm(h[i]) * np.linalg.norm(h[j]))
            expected.append(tanimoto(fps[i], fps[j]) - cos)
    lossv, _ = aux_loss(ad.const(h), fps, LossConfig(aux_form="raw_difference"))
    assert lossv.item() == pytest.approx(np.mean(expected), rel=1e-9)


def test_aux_small_batch_zero_flag():
    lossv, pairs = aux_loss(ad.const(np.ones((1, 4))), [None], LossConfig())
    assert pairs == 0 and lossv.item() == 0.0


def test_aux_symmetric_under_batch_permutation():
    rng = np.random.default_rng(6)
    graphs = [parse(s) for s in ("CCO", "CCN", "c1ccccc1", "CCS")]
    fps = [morgan_fingerprint(g) for g in graphs]
    h = rng.normal(size=(4, 6))
    base = aux_loss(ad.const(h), fps, LossConfig())[0].item()
    perm = [2, 0, 3, 1]
    shuffled = aux_loss(ad.const(h[perm]), [fps[i] for i in perm], LossConfig())[0].item()
    assert shuffled == pytest.approx(base, rel=1e-12)


def test_aux_gradients_match_fd():
    rng = np.random.default_rng(7)
    graphs = [parse(s) for s in ("CCO", "CCN", "c1ccccc1")]
    fps = [morgan_fingerprint(g) for g in graphs]
    vals = rng.normal(size=(3, 6))
    param = ad.parameter(vals)

    def build():
        return aux_loss(param, fps, LossConfig())[0]

    build().backward()
    flat_vals = param.values.reshape(-1)
    flat_grad = param.grad.reshape(-1)
    for _ in range(8):
        i = int(rng.integers(flat_vals.size))
        fd = fd_gradient(lambda: build().item(), flat_vals, i)
        assert flat_grad[i] == pytest.approx(fd, rel=1e-4, abs=1e-8)


def test_total_loss_affine_combination():
    lr = ad.const(0.4)
    la = ad.const(0.2)
    assert total_loss(lr, la, 1.0).item() == pytest.approx(0.4)
    assert total_loss(lr, la, 0.0).item() == pytest.approx(0.2)
    assert total_loss(lr, la, 0.5).item() == pytest.approx(0.3)
    assert total_loss(lr, None, 1.0).item() == pytest.approx(0.4)
    with pytest.raises(ValueError):
        total_loss(lr, None, 0.5)


def test_config_validation():
    with pytest.raises(ValueError):
        LossConfig(gamma=0.5)
    with pytest.raises(ValueError):
        LossConfig(beta=1.5)
    with pytest.raises(ValueError):
        LossConfig(rec_kind="huber")
