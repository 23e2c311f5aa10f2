use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segtrack_core::affinity::{
    combined_loss, forward_loss, match_loss, nonmax_loss, normalize, pad_dynamic, reverse_loss, CombinedLossInput,
    GroundTruthAssociation,
};
use segtrack_core::Matrix;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect())
}

/// Random column- or row-stochastic matrix, by hand-rolled normalization.
fn stochastic(rng: &mut ChaCha8Rng, rows: usize, cols: usize, by_column: bool) -> Matrix {
    let mut m = random_matrix(rng, rows, cols, 0.0, 1.0);
    if by_column {
        for c in 0..cols {
            let s: f64 = (0..rows).map(|r| m[(r, c)]).sum();
            for r in 0..rows {
                m[(r, c)] /= s;
            }
        }
    } else {
        for r in 0..rows {
            let s: f64 = m.row(r).iter().sum();
            m.row_mut(r).iter_mut().for_each(|v| *v /= s);
        }
    }
    m
}

fn clamp_log(p: f64) -> f64 {
    -(p.max(1e-12)).ln()
}

fn random_gt(rng: &mut ChaCha8Rng, cap: usize) -> GroundTruthAssociation {
    loop {
        let n_prev = rng.random_range(1..=cap);
        let n_cur = rng.random_range(1..=cap);
        let mut cols: Vec<usize> = (0..n_cur).collect();
        let mut pairs = Vec::new();
        for i in 0..n_prev {
            if !cols.is_empty() && rng.random::<f64>() < 0.7 {
                let k = rng.random_range(0..cols.len());
                pairs.push((i, cols.swap_remove(k)));
            }
        }
        if !pairs.is_empty() {
            return GroundTruthAssociation::from_pairs(cap, n_prev, n_cur, &pairs).unwrap();
        }
    }
}

#[test]
fn probabilities_are_stochastic() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let n = rng.random_range(1..=50);
        let t = random_matrix(&mut rng, n, n, -50.0, 50.0);
        let gamma = rng.random_range(-50.0..50.0);
        let (m_fw, m_rv) = pad_dynamic(&t, gamma);
        assert_eq!(m_fw.shape(), (n + 1, n));
        assert_eq!(m_rv.shape(), (n, n + 1));
        let (p_fw, p_rv) = normalize(&m_fw, &m_rv);
        assert!(p_fw.as_slice().iter().chain(p_rv.as_slice()).all(|v| v.is_finite() && *v >= 0.0));
        for c in 0..n {
            assert!((p_fw.column(c).sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        for r in 0..n {
            assert!((p_rv.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn huge_inputs_do_not_overflow() {
    let t = Matrix::from_rows(&[vec![1e300, -1e300], vec![700.0, 800.0]]);
    let (p_fw, p_rv) = normalize(&pad_dynamic(&t, 0.0).0, &pad_dynamic(&t, 0.0).1);
    assert!(p_fw.as_slice().iter().chain(p_rv.as_slice()).all(|v| v.is_finite()));
    assert_eq!(p_fw[(0, 0)], 1.0);
}

#[test]
fn zero_on_perfect_one_hot() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let cap = rng.random_range(1..=10);
        let gt = random_gt(&mut rng, cap);
        assert_eq!(forward_loss(&gt.g_fw, &gt.g_fw).unwrap(), 0.0);
        assert_eq!(reverse_loss(&gt.g_rv, &gt.g_rv).unwrap(), 0.0);
        assert_eq!(nonmax_loss(&gt.g_fw, &gt.g_rv, &gt.g).unwrap(), 0.0);
    }
}

#[test]
fn uniform_gives_log_of_padded_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for cap in 1..=50 {
        let gt = random_gt(&mut rng, cap);
        let (p_fw, p_rv) = normalize(&pad_dynamic(&Matrix::zeros(cap, cap), 0.0).0, &pad_dynamic(&Matrix::zeros(cap, cap), 0.0).1);
        let want = ((cap + 1) as f64).ln();
        assert!((forward_loss(&p_fw, &gt.g_fw).unwrap() - want).abs() <= 1e-12);
        assert!((reverse_loss(&p_rv, &gt.g_rv).unwrap() - want).abs() <= 1e-12);
        assert!((nonmax_loss(&p_fw, &p_rv, &gt.g).unwrap() - want).abs() <= 1e-12);
    }
}

#[test]
fn losses_match_formula_transcription() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let cap = rng.random_range(1..=8);
        let gt = random_gt(&mut rng, cap);
        let p_fw = stochastic(&mut rng, cap + 1, cap, true);
        let p_rv = stochastic(&mut rng, cap, cap + 1, false);

        let (mut fw_num, mut fw_den) = (0.0, 0.0);
        for i in 0..=cap {
            for j in 0..cap {
                fw_num += gt.g_fw[(i, j)] * clamp_log(p_fw[(i, j)]);
                fw_den += gt.g_fw[(i, j)];
            }
        }
        let (mut rv_num, mut rv_den) = (0.0, 0.0);
        for i in 0..cap {
            for j in 0..=cap {
                rv_num += gt.g_rv[(i, j)] * clamp_log(p_rv[(i, j)]);
                rv_den += gt.g_rv[(i, j)];
            }
        }
        let (mut nm_num, mut nm_den) = (0.0, 0.0);
        for i in 0..cap {
            for j in 0..cap {
                nm_num += gt.g[(i, j)] * clamp_log(p_fw[(i, j)].max(p_rv[(i, j)]));
                nm_den += gt.g[(i, j)];
            }
        }
        let (l_fw, l_rv, l_nm) = (fw_num / fw_den, rv_num / rv_den, nm_num / nm_den);
        assert!((forward_loss(&p_fw, &gt.g_fw).unwrap() - l_fw).abs() <= 1e-12);
        assert!((reverse_loss(&p_rv, &gt.g_rv).unwrap() - l_rv).abs() <= 1e-12);
        assert!((nonmax_loss(&p_fw, &p_rv, &gt.g).unwrap() - l_nm).abs() <= 1e-12);

        let report = match_loss(l_fw, l_rv, l_nm);
        assert!((report.l_match - (l_fw + l_rv + l_nm) / 3.0).abs() <= 1e-12);

        let input = CombinedLossInput {
            l_detseg_prev: rng.random_range(0.0..10.0),
            l_detseg_cur: rng.random_range(0.0..10.0),
            l_match: report.l_match,
            s_i: rng.random_range(-3.0..3.0),
            s_j: rng.random_range(-3.0..3.0),
        };
        let want = 0.5
            * ((1.0 / input.s_i.exp()) * (input.l_detseg_prev + input.l_detseg_cur)
                + input.s_i
                + (1.0 / input.s_j.exp()) * input.l_match
                + input.s_j);
        assert!((combined_loss(&input) - want).abs() <= 1e-12);
    }
}

#[test]
fn combiner_examples() {
    let zero = CombinedLossInput { l_detseg_prev: 0.0, l_detseg_cur: 0.0, l_match: 0.0, s_i: 0.0, s_j: 0.0 };
    assert_eq!(combined_loss(&zero), 0.0);
    let ones = CombinedLossInput { l_detseg_prev: 1.0, l_detseg_cur: 1.0, l_match: 2.0, ..zero };
    assert_eq!(combined_loss(&ones), 2.0);
    assert_eq!(match_loss(1.0, 2.0, 6.0).l_match, 3.0);
}

#[test]
fn empty_ground_truth_rejected() {
    let g = Matrix::zeros(3, 2);
    assert!(forward_loss(&Matrix::filled(3, 2, 0.5), &g).is_err());
}

proptest! {
    #[test]
    fn column_shift_invariance(seed in any::<u64>(), shift in -100.0f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=8);
        let t = random_matrix(&mut rng, n, n, -20.0, 20.0);
        let (m_fw, m_rv) = pad_dynamic(&t, 0.2);
        let c = rng.random_range(0..n);
        let mut shifted = m_fw.clone();
        for r in 0..=n {
            shifted[(r, c)] += shift;
        }
        let (a, _) = normalize(&m_fw, &m_rv);
        let (b, _) = normalize(&shifted, &m_rv);
        for r in 0..=n {
            prop_assert!((a[(r, c)] - b[(r, c)]).abs() <= 1e-9);
        }
    }

    #[test]
    fn raising_gt_probability_never_hurts(seed in any::<u64>(), boost in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cap = rng.random_range(1..=6);
        let gt = random_gt(&mut rng, cap);
        let p = stochastic(&mut rng, cap + 1, cap, true);
        let before = forward_loss(&p, &gt.g_fw).unwrap();
        prop_assert!(before >= 0.0);
        let mut q = p.clone();
        let labelled: Vec<(usize, usize)> =
            (0..cap).filter_map(|j| (0..=cap).find(|&i| gt.g_fw[(i, j)] == 1.0).map(|i| (i, j))).collect();
        let (i, j) = labelled[rng.random_range(0..labelled.len())];
        q[(i, j)] += boost;
        let s: f64 = q.column(j).sum();
        for r in 0..=cap {
            q[(r, j)] /= s;
        }
        prop_assert!(forward_loss(&q, &gt.g_fw).unwrap() <= before + 1e-12);
    }
}
