use proptest::prelude::*;
use rovertrack::filters::{butterworth_sos, savgol_weights, sos_to_tf, ActionFilter, FilterSpec};

/// `scipy.signal.butter(4, 2.5, fs=25.0)`.
const SCIPY_B: [f64; 5] = [
    0.00482434335771623,
    0.01929737343086491,
    0.02894606014629737,
    0.01929737343086491,
    0.00482434335771623,
];
const SCIPY_A: [f64; 5] = [1.0, -2.369513007182038, 2.313988414415881, -1.054665405878568, 0.18737949236818502];

#[test]
fn butterworth_matches_scipy_design() {
    let (b, a) = sos_to_tf(&butterworth_sos(4, 2.5, 25.0));
    for (x, y) in b.iter().zip(SCIPY_B).chain(a.iter().zip(SCIPY_A)) {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
}

/// Least-squares polynomial weights from the normal equations `(VᵀV)⁻¹Vᵀ`, solved by
/// Gauss-Jordan elimination on the centred integer sample grid.
fn savgol_normal_equations(order: usize, window: usize, at: usize) -> Vec<f64> {
    let m = order + 1;
    let half = (window as f64 - 1.0) / 2.0;
    let v = move |i: usize, k: usize| (i as f64 - half).powi(k as i32);
    let mut g = vec![vec![0.0; 2 * m]; m];
    for r in 0..m {
        for c in 0..m {
            g[r][c] = (0..window).map(|i| v(i, r) * v(i, c)).sum();
        }
        g[r][m + r] = 1.0;
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&x, &y| g[x][col].abs().total_cmp(&g[y][col].abs())).unwrap();
        g.swap(col, piv);
        let p = g[col][col];
        g[col].iter_mut().for_each(|x| *x /= p);
        for r in 0..m {
            if r != col {
                let f = g[r][col];
                let row = g[col].clone();
                g[r].iter_mut().zip(row).for_each(|(x, y)| *x -= f * y);
            }
        }
    }
    // weight_j = Σ_r Σ_c at^r · inv[r][c] · j^c
    (0..window)
        .map(|j| {
            (0..m)
                .flat_map(|r| (0..m).map(move |c| (r, c)))
                .map(|(r, c)| v(at, r) * g[r][m + c] * v(j, c))
                .sum()
        })
        .collect()
}

#[test]
fn savgol_weights_match_normal_equations() {
    for (order, window) in [(0, 1), (1, 5), (2, 7), (3, 9), (3, 11), (4, 9)] {
        for at in 0..window {
            let a = savgol_weights(order, window, at);
            let b = savgol_normal_equations(order, window, at);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9, "({order},{window}) at {at}: {x} vs {y}");
            }
        }
    }
    let endpoint = savgol_weights(3, 9, 8);
    for (x, n) in endpoint.iter().zip([-7.0, 8.0, 8.0, 0.0, -9.0, -12.0, -2.0, 28.0, 85.0]) {
        assert!((x - n / 99.0).abs() < 1e-13);
    }
}

#[test]
fn moving_average_impulse_response() {
    let mut f = ActionFilter::new(FilterSpec::MOVING_AVERAGE).unwrap();
    f.reset_zeroed();
    let out: Vec<f64> = (0..8).map(|k| f.step([if k == 0 { 1.0 } else { 0.0 }, 0.0]).0[0]).collect();
    for (k, y) in out.iter().enumerate() {
        assert!((y - if k < 5 { 0.2 } else { 0.0 }).abs() < 1e-15);
    }
}

fn all_specs() -> [FilterSpec; 5] {
    [
        FilterSpec::None,
        FilterSpec::MOVING_AVERAGE,
        FilterSpec::SAVITZKY_GOLAY,
        FilterSpec::from_short_name("sg-endpoint").unwrap(),
        FilterSpec::BUTTERWORTH,
    ]
}

proptest! {
    #[test]
    fn filters_are_linear(
        xs in prop::collection::vec(-1.0..1.0f64, 40),
        ys in prop::collection::vec(-1.0..1.0f64, 40),
        alpha in -2.0..2.0f64,
        beta in -2.0..2.0f64,
    ) {
        for spec in all_specs() {
            let run = |s: &[f64]| {
                let mut f = ActionFilter::new(spec).unwrap();
                f.reset_zeroed();
                s.iter().map(|&x| f.step([x, 0.0]).0[0]).collect::<Vec<_>>()
            };
            let mix: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| alpha * x + beta * y).collect();
            let (fx, fy, fm) = (run(&xs), run(&ys), run(&mix));
            for k in 0..mix.len() {
                prop_assert!((fm[k] - (alpha * fx[k] + beta * fy[k])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn reset_restores_the_initial_condition(xs in prop::collection::vec(-1.0..1.0f64, 1..60)) {
        for spec in all_specs() {
            let mut f = ActionFilter::new(spec).unwrap();
            let first: Vec<_> = xs.iter().map(|&x| f.step([x, -x]).0).collect();
            f.reset();
            let second: Vec<_> = xs.iter().map(|&x| f.step([x, -x]).0).collect();
            prop_assert_eq!(first, second);
        }
    }

    #[test]
    fn outputs_stay_within_the_gain_bound(xs in prop::collection::vec(-1.0..1.0f64, 1..200)) {
        for spec in all_specs() {
            let mut f = ActionFilter::new(spec).unwrap();
            let bound = f.gain_bound();
            for &x in &xs {
                let y = f.step([x, x]).0;
                prop_assert!(y[0].abs() <= bound + 1e-12);
            }
        }
    }
}

#[test]
fn channels_are_independent() {
    let mut both = ActionFilter::new(FilterSpec::BUTTERWORTH).unwrap();
    let mut only0 = ActionFilter::new(FilterSpec::BUTTERWORTH).unwrap();
    for k in 0..100 {
        let x = (k as f64 * 0.3).sin();
        let a = both.step([x, (k as f64).cos()]).0;
        let b = only0.step([x, 0.0]).0;
        assert_eq!(a[0], b[0]);
    }
}
