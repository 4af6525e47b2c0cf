//! Wall-clock comparison of alignment against a full rebuild.

use std::fs;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use repograph::align::{align, compute_diff};
use repograph::config::RepoConfig;
use repograph::extract::IndexConfig;
use repograph::index::Index;
use serde::Serialize;

use crate::generate::{generate_repo, SyntheticRepoSpec};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub size: usize,
    pub changed: usize,
    /// Medians in milliseconds.
    pub rebuild_ms: f64,
    pub align_ms: f64,
    /// Hashing the worktree against the manifest.
    pub diff_ms: f64,
    pub speedup: f64,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

pub fn median(xs: &mut [f64]) -> f64 {
    assert!(!xs.is_empty());
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn regression_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if var == 0.0 {
        0.0
    } else {
        cov / var
    }
}

/// For each size: generates a repository from `base` resized to `size`
/// files, indexes it once, then `repetitions` times modifies
/// max(1, round(diff_fraction·size)) modules and times the alignment of the
/// cached index and a from-scratch build of the same worktree. Everything
/// runs on one worker thread. The diff computation is timed separately.
pub fn bench_align(
    base: &SyntheticRepoSpec,
    sizes: &[usize],
    diff_fraction: f64,
    repetitions: usize,
) -> Result<Vec<BenchRow>> {
    let cfg = RepoConfig {
        index: IndexConfig {
            threads: 1,
            ..IndexConfig::default()
        },
        ..RepoConfig::default()
    };
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let spec = SyntheticRepoSpec {
            file_count: size,
            ..base.clone()
        };
        let dir = tempfile::tempdir()?;
        let repo = generate_repo(&spec, dir.path())?;
        let modules = repo.module_paths();
        let prev = Index::build(dir.path(), &cfg)?;
        let changed = ((diff_fraction * size as f64).round() as usize).clamp(1, modules.len());
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ size as u64);
        let (mut rebuild, mut aligned, mut diffing) = (Vec::new(), Vec::new(), Vec::new());
        for rep in 0..repetitions.max(1) {
            let picked: Vec<&String> = sample(&mut rng, modules.len(), changed)
                .into_iter()
                .map(|i| &modules[i])
                .collect();
            for (j, p) in picked.iter().enumerate() {
                let mut text = repo.render(p).unwrap_or_default();
                text.push_str(&format!("\n\ndef bench_{rep}_{j}():\n    return {rep}\n"));
                fs::write(dir.path().join(p), text)?;
            }

            let t = Instant::now();
            let diff = compute_diff(&prev.manifest, dir.path(), &cfg.index)?;
            diffing.push(ms(t.elapsed()));

            let t = Instant::now();
            let next = align(&prev, &diff, dir.path(), &cfg)?;
            aligned.push(ms(t.elapsed()));
            drop(next);

            let t = Instant::now();
            let fresh = Index::build(dir.path(), &cfg)?;
            rebuild.push(ms(t.elapsed()));
            drop(fresh);

            for p in &picked {
                repo.write_one(dir.path(), p)?;
            }
        }
        let rebuild_ms = median(&mut rebuild);
        let align_ms = median(&mut aligned);
        rows.push(BenchRow {
            size,
            changed,
            rebuild_ms,
            align_ms,
            diff_ms: median(&mut diffing),
            speedup: rebuild_ms / align_ms.max(1e-9),
        });
    }
    Ok(rows)
}
