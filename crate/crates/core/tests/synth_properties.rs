mod common;

use lsvm::model::Label;
use lsvm::synth::{
    generate_ellipsoid_volumes, generate_phantom_series, generate_simple, phantom_ellipses, simulate_simple_line,
    EllipsoidConfig, PhantomConfig, PhantomIntensities, SimpleCaseConfig, SynthConfig, SynthError, VARIED_ELLIPSE,
};
use lsvm::Dataset;
use proptest::prelude::*;

#[test]
fn walk_increments_have_the_right_spread() {
    let (t, sigma) = (10, 0.5);
    let mut diffs = Vec::new();
    let mut drifted = Vec::new();
    for seed in 0..50 {
        let cfg = SimpleCaseConfig::new(8, 5, t, sigma, seed);
        for line in 0..10 {
            let label = if line < 5 { Label::Positive } else { Label::Negative };
            let (x0, frames) = simulate_simple_line(&cfg, line, label);
            let last = &frames[t - 1];
            for k in 0..cfg.p {
                let d = last[k] - x0[k] - if label == Label::Positive { cfg.drift[k] * t as f64 } else { 0.0 };
                diffs.push(d);
                if label == Label::Positive && k < 2 {
                    drifted.push(last[k] - x0[k]);
                }
            }
        }
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let want = t as f64 * sigma * sigma;
    assert!((var / want - 1.0).abs() <= 0.3, "variance {var}, expected {want}");
    assert!(mean.abs() < 0.2, "residual mean {mean}");
    let drift_mean = drifted.iter().sum::<f64>() / drifted.len() as f64;
    assert!((drift_mean - 20.0).abs() < 0.5, "drift mean {drift_mean}");
}

/// Voxel membership written out directly, without the library's helpers.
fn ellipsoid_oracle(cfg: &EllipsoidConfig, sx: f64, sz: f64) -> Vec<f64> {
    let (nx, ny, nz) = cfg.grid;
    let a = sx.max(0.0) * nx as f64 / 2.0;
    let b = cfg.y_fraction * ny as f64 / 2.0;
    let c = sz.max(0.0) * nz as f64 / 2.0;
    let mut out = Vec::with_capacity(nx * ny * nz);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let dx = x as f64 - (nx / 2) as f64;
                let dy = y as f64 - (ny / 2) as f64;
                let dz = z as f64 - (nz / 2) as f64;
                let hit = a > 0.0 && c > 0.0 && dx * dx / (a * a) + dy * dy / (b * b) + dz * dz / (c * c) <= 1.0;
                out.push(if hit { cfg.intensity_offset } else { 0.0 });
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ellipsoid_render_matches_oracle(
        nx in 4usize..14, ny in 4usize..14, nz in 4usize..14,
        sx in -0.1f64..1.1, sz in -0.1f64..1.1, yf in 0.05f64..0.9,
    ) {
        let cfg = EllipsoidConfig { grid: (nx, ny, nz), y_fraction: yf, ..EllipsoidConfig::default() };
        prop_assert_eq!(cfg.render(sx, sz), ellipsoid_oracle(&cfg, sx, sz));
    }

    #[test]
    fn simple_case_datasets_are_well_formed(
        p in 2usize..8, lines in 1usize..5, t in 1usize..6, sigma in 0.0f64..2.0, seed in any::<u64>(),
    ) {
        let cfg = SimpleCaseConfig::new(p, lines, t, sigma, seed);
        let ds: Dataset = generate_simple(&cfg).unwrap();
        prop_assert_eq!(ds.p(), p);
        prop_assert_eq!(ds.len(), 2 * lines);
        prop_assert_eq!(ds.class_counts(), (lines, lines));
        for s in ds.subjects() {
            let times: Vec<f64> = s.times().collect();
            prop_assert_eq!(times, (1..=t).map(|k| k as f64).collect::<Vec<_>>());
        }
        prop_assert_eq!(&ds, &generate_simple::<f64>(&cfg).unwrap());
    }
}

#[test]
fn phantom_matches_a_direct_rasterization() {
    let cfg = PhantomConfig { side: 32, ..PhantomConfig::default() };
    let table = phantom_ellipses(PhantomIntensities::Modified);
    for short in [0.0, 0.08, 0.16, 0.3] {
        let img = cfg.render(short);
        for row in 0..32 {
            for col in 0..32 {
                let x = (col as f64 + 0.5) / 16.0 - 1.0;
                let y = 1.0 - (row as f64 + 0.5) / 16.0;
                let mut want = 0.0;
                for (k, e) in table.iter().enumerate() {
                    let a = if k == VARIED_ELLIPSE { short } else { e.a };
                    if a <= 0.0 {
                        continue;
                    }
                    let th = e.phi_deg * std::f64::consts::PI / 180.0;
                    let u = (x - e.x0) * th.cos() + (y - e.y0) * th.sin();
                    let v = (y - e.y0) * th.cos() - (x - e.x0) * th.sin();
                    if (u / a).powi(2) + (v / e.b).powi(2) <= 1.0 {
                        want += e.intensity;
                    }
                }
                assert!((img[row * 32 + col] - want).abs() < 1e-12, "pixel ({row}, {col})");
            }
        }
    }
}

#[test]
fn phantom_and_ellipsoid_series_validate() {
    let ds: Dataset = generate_phantom_series(&PhantomConfig { side: 16, lines_per_class: 2, ..Default::default() }).unwrap();
    assert_eq!(ds.p(), 256);
    assert_eq!(ds.total_obs(), 4 * 10);
    let cfg = EllipsoidConfig { grid: (6, 5, 4), ..Default::default() };
    let ds: Dataset = generate_ellipsoid_volumes(&cfg).unwrap();
    assert_eq!(ds.p(), 120);
    assert_eq!(ds, generate_ellipsoid_volumes::<f64>(&cfg).unwrap());
}

#[test]
fn selection_lines_grow_on_average() {
    let cfg = EllipsoidConfig { lines_per_class: 20, ..Default::default() };
    let end = |label| {
        let range = if label == Label::Positive { 0..20 } else { 20..40 };
        range.map(|l| cfg.axis_trajectory(l, label).last().unwrap().0).sum::<f64>() / 20.0
    };
    let grown = end(Label::Positive) - cfg.s0x;
    assert!((grown - cfg.a0 * cfg.generations as f64).abs() < 0.02, "{grown}");
    assert!((end(Label::Negative) - cfg.s0x).abs() < 0.02);
}

#[test]
fn seeds_change_the_data() {
    let base = SynthConfig::Simple(SimpleCaseConfig::new(4, 2, 3, 0.5, 1));
    let a: Dataset = base.generate().unwrap();
    let b: Dataset = base.with_seed(2).generate().unwrap();
    assert_ne!(a, b);
    assert_eq!(base.with_seed(2).seed(), 2);
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        SynthConfig::Simple(SimpleCaseConfig::new(1, 2, 3, 0.5, 0)),
        SynthConfig::Simple(SimpleCaseConfig::new(4, 2, 3, -1.0, 0)),
        SynthConfig::Ellipsoid(EllipsoidConfig { grid: (3, 8, 8), ..Default::default() }),
        SynthConfig::Ellipsoid(EllipsoidConfig { lambda: -0.1, ..Default::default() }),
        SynthConfig::Phantom(PhantomConfig { side: 8, ..Default::default() }),
        SynthConfig::Phantom(PhantomConfig { generations: 0, ..Default::default() }),
    ];
    for cfg in bad {
        assert!(matches!(cfg.generate::<f64>(), Err(SynthError::InvalidConfig(_))), "{cfg:?}");
    }
}
