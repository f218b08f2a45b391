use mhol::{GlmKind, GlmModel, SparseVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const L2: f64 = 0.05;

fn random_point(kind: GlmKind, rng: &mut ChaCha8Rng) -> (GlmModel<f64>, SparseVector<f64>, f64) {
    let mut m = GlmModel::new(kind, 6).unwrap();
    for j in 0..64 {
        m.set_weight(j, rng.random_range(-0.5..0.5));
    }
    m.set_bias(rng.random_range(-1.0..1.0));
    let mut terms = Vec::new();
    for _ in 0..6 {
        terms.push((rng.random_range(0..64u32), rng.random_range(-2.0..2.0)));
    }
    let x = SparseVector::from_terms(terms).unwrap();
    let label = match kind {
        GlmKind::Logistic => f64::from(rng.random_bool(0.5) as u8),
        GlmKind::Linear => rng.random_range(0.0..5.0),
    };
    (m, x, label)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn check_kind(kind: GlmKind) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let (m, x, y) = random_point(kind, &mut rng);
        let f = |m: &GlmModel<f64>| m.objective(&x, y, L2, 1e-12);
        let (gw, gb) = m.gradient(&x, y, L2);
        for (k, (j, _)) in x.iter().enumerate() {
            let w = m.weights()[j];
            let mut plus = m.clone();
            plus.set_weight(j, w + H);
            let mut minus = m.clone();
            minus.set_weight(j, w - H);
            let fd = (f(&plus) - f(&minus)) / (2.0 * H);
            assert!(rel_err(gw[k], fd) < 1e-6, "{kind:?} coord {j}: {} vs {fd}", gw[k]);
        }
        let b = m.bias();
        let mut plus = m.clone();
        plus.set_bias(b + H);
        let mut minus = m.clone();
        minus.set_bias(b - H);
        let fd = (f(&plus) - f(&minus)) / (2.0 * H);
        assert!(rel_err(gb, fd) < 1e-6, "{kind:?} intercept: {gb} vs {fd}");
    }
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    check_kind(GlmKind::Logistic);
}

#[test]
fn linear_gradient_matches_finite_differences() {
    check_kind(GlmKind::Linear);
}
