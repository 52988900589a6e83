//! Independent oracles shared by the integration suites. Nothing here calls
//! the library's own pricing or statistics code.

#![allow(dead_code)]

/// Price of a European payoff by enumerating all `2^steps` paths of a
/// zero-rate binomial model started at 1.
pub fn brute_force_price(up: f64, down: f64, steps: u32, payoff: impl Fn(f64) -> f64) -> f64 {
    let q = (1.0 - down) / (up - down);
    let mut total = Neumaier::default();
    for path in 0u64..(1u64 << steps) {
        let mut wealth = 1.0;
        let mut prob = 1.0;
        for i in 0..steps {
            if path >> i & 1 == 1 {
                wealth *= up;
                prob *= q;
            } else {
                wealth *= down;
                prob *= 1.0 - q;
            }
        }
        total.add(prob * payoff(wealth));
    }
    total.sum()
}

/// Expectation of `f(terminal wealth)` over all `2^steps` coin paths where
/// each up-move has probability `p`.
pub fn enumerate_expectation(
    up: f64,
    down: f64,
    p: f64,
    steps: u32,
    f: impl Fn(f64) -> f64,
) -> f64 {
    let mut total = Neumaier::default();
    for path in 0u64..(1u64 << steps) {
        let ups = path.count_ones() as i32;
        let downs = steps as i32 - ups;
        let wealth = up.powi(ups) * down.powi(downs);
        total.add(p.powi(ups) * (1.0 - p).powi(downs) * f(wealth));
    }
    total.sum()
}

/// Compensated summation, so million-path enumerations stay exact to ~1 ulp.
#[derive(Default)]
pub struct Neumaier {
    sum: f64,
    carry: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn sum(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean with the n − 1 variance.
pub fn std_error(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0);
    (var / xs.len() as f64).sqrt()
}

pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Standard normal CDF from the Taylor series of erf for |z| < 1 and the
/// Lentz continued fraction of erfc otherwise.
pub fn phi(x: f64) -> f64 {
    let z = x / std::f64::consts::SQRT_2;
    if z.abs() < 1.0 {
        // erf(z) = 2/√π Σ (-1)^n z^{2n+1} / (n! (2n+1))
        let mut term = z;
        let mut sum = z;
        for n in 1..80 {
            term *= -z * z / n as f64;
            sum += term / (2 * n + 1) as f64;
        }
        0.5 * (1.0 + 2.0 / std::f64::consts::PI.sqrt() * sum)
    } else {
        // erfc(|z|) by Lentz continued fraction.
        let a = z.abs();
        let mut f = a;
        let mut c = a;
        let mut d = 0.0;
        for k in 1..20_000 {
            let kk = k as f64 * 0.5;
            d = a + kk * d;
            d = 1.0 / d;
            c = a + kk / c;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let erfc = (-a * a).exp() / (f * std::f64::consts::PI.sqrt());
        if z > 0.0 {
            1.0 - 0.5 * erfc
        } else {
            0.5 * erfc
        }
    }
}

/// One-sample Kolmogorov–Smirnov statistic of `sample` against `cdf`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value `P(√n D > d)` from the Kolmogorov distribution with
/// the Stephens small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1.18 {
        // Jacobi-transformed series, which converges fast for small λ.
        if lambda < 1e-3 {
            return 1.0;
        }
        let pi2 = std::f64::consts::PI.powi(2);
        let sum: f64 = (1..=50)
            .map(|k| {
                let j = (2 * k - 1) as f64;
                (-j * j * pi2 / (8.0 * lambda * lambda)).exp()
            })
            .sum();
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * sum;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let sign = if k as i64 % 2 == 1 { 1.0 } else { -1.0 };
        sum += sign * (-2.0 * k * k * lambda * lambda).exp();
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Checks `|estimate − target| ≤ 3·se`, with a tiny absolute slack for se = 0.
pub fn within_3se(estimate: f64, target: f64, se: f64) -> bool {
    (estimate - target).abs() <= 3.0 * se + 1e-12
}
