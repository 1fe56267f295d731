use crate::dataset::Label;

/// Fits `p(f) = sigmoid(a * f + b)` to decision values by regularized
/// maximum likelihood (Platt targets, Newton iterations with backtracking).
/// Returns `(a, b)`.
pub fn fit_platt(decisions: &[f64], labels: &[Label]) -> (f64, f64) {
    let prior1 = labels.iter().filter(|l| l.is_pd()).count() as f64;
    let prior0 = labels.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let t: Vec<f64> = labels.iter().map(|l| if l.is_pd() { hi } else { lo }).collect();

    // Internally p = 1 / (1 + exp(A f + B)); the result flips both signs.
    let max_iter = 100;
    let min_step = 1e-10;
    let sigma = 1e-12;
    let eps = 1e-5;
    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();

    let objective = |a: f64, b: f64| -> f64 {
        let mut fval = 0.0;
        for (&f, &ti) in decisions.iter().zip(&t) {
            let z = f * a + b;
            fval += if z >= 0.0 { ti * z + (1.0 + (-z).exp()).ln() } else { (ti - 1.0) * z + (1.0 + z.exp()).ln() };
        }
        fval
    };
    let mut fval = objective(a, b);

    for _ in 0..max_iter {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (sigma, sigma, 0.0, 0.0, 0.0);
        for (&f, &ti) in decisions.iter().zip(&t) {
            let z = f * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = ti - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < eps && g2.abs() < eps {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= min_step {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < min_step {
            break;
        }
    }
    (-a, -b)
}
