//! Metrics over externally computed embedding vectors: k-NN manifold
//! precision/recall, Fréchet distance, and kernel distance. Embedding
//! computation itself (e.g. a point-cloud backbone) is out of scope; this
//! code only ingests vectors from CSV or raw float32 files.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::{Error, Result};

/// A set of n embedding vectors sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub vectors: Vec<Vec<f64>>,
    pub labels: Option<Vec<String>>,
}

impl EmbeddingSet {
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let set = EmbeddingSet {
            vectors,
            labels: None,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    /// True when there are too few samples to determine a full-rank
    /// covariance; FID is still computed (shrinkage keeps it defined)
    /// but reports should carry this flag.
    pub fn is_underdetermined(&self) -> bool {
        self.len() <= self.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.vectors.is_empty() {
            return Err(Error::Precondition("embedding set is empty".into()));
        }
        let d = self.vectors[0].len();
        if d == 0 {
            return Err(Error::Precondition("embedding dimension must be positive".into()));
        }
        for (i, v) in self.vectors.iter().enumerate() {
            if v.len() != d {
                return Err(Error::Precondition(format!(
                    "embedding row {} has dimension {} (expected {})",
                    i,
                    v.len(),
                    d
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("non-finite embedding entry in row {}", i)));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.vectors.len() {
                return Err(Error::Precondition("label count does not match vectors".into()));
            }
        }
        Ok(())
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-NN manifold precision and recall: precision is the fraction of
/// generated vectors lying inside the union of reference k-NN balls
/// (each reference's ball reaches its k-th nearest co-reference); recall
/// swaps the roles.
pub fn precision_recall(
    gen: &EmbeddingSet,
    refs: &EmbeddingSet,
    k: usize,
) -> Result<(f64, f64)> {
    gen.validate()?;
    refs.validate()?;
    if gen.dim() != refs.dim() {
        return Err(Error::Precondition(format!(
            "embedding dimension mismatch: {} vs {}",
            gen.dim(),
            refs.dim()
        )));
    }
    if k == 0 || k + 1 > gen.len() || k + 1 > refs.len() {
        return Err(Error::Precondition(format!(
            "k-NN manifold needs k >= 1 and more than k vectors per set (k = {}, sizes {} / {})",
            k,
            gen.len(),
            refs.len()
        )));
    }
    let fraction_inside = |queries: &EmbeddingSet, manifold: &EmbeddingSet| -> f64 {
        // Ball radius per manifold vector: squared distance to its k-th
        // nearest neighbor within the manifold (self excluded).
        let radius2: Vec<f64> = manifold
            .vectors
            .par_iter()
            .enumerate()
            .map(|(j, m)| {
                let mut d2: Vec<f64> = manifold
                    .vectors
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != j)
                    .map(|(_, other)| dist2(m, other))
                    .collect();
                let (_, kth, _) = d2.select_nth_unstable_by(k - 1, f64::total_cmp);
                *kth
            })
            .collect();
        let inside = queries
            .vectors
            .par_iter()
            .filter(|q| {
                manifold
                    .vectors
                    .iter()
                    .zip(&radius2)
                    .any(|(m, &r2)| dist2(q, m) <= r2)
            })
            .count();
        inside as f64 / queries.len() as f64
    };
    Ok((
        fraction_inside(gen, refs),
        fraction_inside(refs, gen),
    ))
}

fn mean_and_covariance(set: &EmbeddingSet) -> (nalgebra::DVector<f64>, DMatrix<f64>) {
    let (n, d) = (set.len(), set.dim());
    let x = DMatrix::from_row_iterator(n, d, set.vectors.iter().flatten().cloned());
    let mean = x.row_mean().transpose(); // d x 1
    let mut centered = x;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let mut cov = centered.transpose() * &centered / denom;
    // Shrinkage keeps the square roots defined for rank-deficient
    // covariances (fewer samples than dimensions).
    for i in 0..d {
        cov[(i, i)] += 1e-6;
    }
    (mean, cov)
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussian fits of the two embedding sets:
/// `||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2})`, the matrix square
/// root taken via the symmetric product `S1^{1/2} S2 S1^{1/2}`.
pub fn fid(gen: &EmbeddingSet, refs: &EmbeddingSet) -> Result<f64> {
    gen.validate()?;
    refs.validate()?;
    if gen.dim() != refs.dim() {
        return Err(Error::Precondition(format!(
            "embedding dimension mismatch: {} vs {}",
            gen.dim(),
            refs.dim()
        )));
    }
    let (mu1, s1) = mean_and_covariance(gen);
    let (mu2, s2) = mean_and_covariance(refs);
    let s1h = psd_sqrt(&s1);
    let inner = &s1h * &s2 * &s1h;
    let cross_trace: f64 = inner
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    let diff = &mu1 - &mu2;
    let value = diff.norm_squared() + s1.trace() + s2.trace() - 2.0 * cross_trace;
    if !value.is_finite() {
        return Err(Error::Numeric("FID evaluated to a non-finite value".into()));
    }
    Ok(value)
}

/// Unbiased kernel distance (squared MMD) with the degree-3 polynomial
/// kernel `(x . y / d + 1)^3`. For equally sized sets the cross term
/// skips paired indices, so identical sets score exactly zero; slightly
/// negative values are an expected estimator property near zero.
pub fn kid(gen: &EmbeddingSet, refs: &EmbeddingSet) -> Result<f64> {
    gen.validate()?;
    refs.validate()?;
    if gen.dim() != refs.dim() {
        return Err(Error::Precondition(format!(
            "embedding dimension mismatch: {} vs {}",
            gen.dim(),
            refs.dim()
        )));
    }
    if gen.len() < 2 || refs.len() < 2 {
        return Err(Error::Precondition("KID needs at least two vectors per set".into()));
    }
    let d = gen.dim() as f64;
    let kernel = |x: &[f64], y: &[f64]| -> f64 {
        let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let base = dot / d + 1.0;
        base * base * base
    };
    let self_term = |set: &EmbeddingSet| -> f64 {
        let n = set.len();
        let total: f64 = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| kernel(&set.vectors[i], &set.vectors[j]))
                    .sum::<f64>()
            })
            .sum();
        total / (n * (n - 1)) as f64
    };
    let (n, m) = (gen.len(), refs.len());
    let cross_term = if n == m {
        let total: f64 = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..m)
                    .filter(|&j| j != i)
                    .map(|j| kernel(&gen.vectors[i], &refs.vectors[j]))
                    .sum::<f64>()
            })
            .sum();
        total / (n * (n - 1)) as f64
    } else {
        let total: f64 = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..m)
                    .map(|j| kernel(&gen.vectors[i], &refs.vectors[j]))
                    .sum::<f64>()
            })
            .sum();
        total / (n * m) as f64
    };
    Ok(self_term(gen) + self_term(refs) - 2.0 * cross_term)
}

/// Loads embeddings from CSV: one vector per row, comma separated. A
/// first row that fails to parse as numbers is treated as a header and
/// skipped.
pub fn load_embeddings_csv(path: impl AsRef<std::path::Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut vectors = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => vectors.push(row),
            Err(_) if line_no == 0 => continue, // header row
            Err(e) => {
                return Err(Error::parse(path, line_no + 1, format!("bad embedding row: {}", e)))
            }
        }
    }
    if vectors.is_empty() {
        return Err(Error::parse(path, 1, "no embedding rows found"));
    }
    let set = EmbeddingSet {
        vectors,
        labels: None,
    };
    set.validate()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?;
    Ok(set)
}

pub fn save_embeddings_csv(path: impl AsRef<std::path::Path>, set: &EmbeddingSet) -> Result<()> {
    set.validate()?;
    let mut out = String::new();
    for row in &set.vectors {
        let cells: Vec<String> = row.iter().map(|v| format!("{}", v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    crate::mesh_io::ply::write_atomic(path.as_ref(), out.as_bytes())
}

/// Loads embeddings from raw little-endian float32 (row-major) described
/// by a `<path>.json` sidecar with `count` and `dim`.
pub fn load_embeddings_raw(path: impl AsRef<std::path::Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let mut sidecar_path = path.as_os_str().to_owned();
    sidecar_path.push(".json");
    let sidecar_path = std::path::PathBuf::from(sidecar_path);
    let sidecar: serde_json::Value = serde_json::from_slice(
        &std::fs::read(&sidecar_path).map_err(|e| Error::io(&sidecar_path, e))?,
    )
    .map_err(|e| Error::parse(&sidecar_path, 1, e.to_string()))?;
    let count = sidecar["count"].as_u64().ok_or_else(|| {
        Error::parse(&sidecar_path, 1, "sidecar missing integer `count`")
    })? as usize;
    let dim = sidecar["dim"]
        .as_u64()
        .ok_or_else(|| Error::parse(&sidecar_path, 1, "sidecar missing integer `dim`"))?
        as usize;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != count * dim * 4 {
        return Err(Error::parse(
            path,
            1,
            format!(
                "raw embedding size {} does not match {} x {} float32",
                bytes.len(),
                count,
                dim
            ),
        ));
    }
    let vectors: Vec<Vec<f64>> = (0..count)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    let at = (i * dim + j) * 4;
                    f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as f64
                })
                .collect()
        })
        .collect();
    let set = EmbeddingSet {
        vectors,
        labels: None,
    };
    set.validate()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?;
    Ok(set)
}

pub fn save_embeddings_raw(path: impl AsRef<std::path::Path>, set: &EmbeddingSet) -> Result<()> {
    set.validate()?;
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(set.len() * set.dim() * 4);
    for row in &set.vectors {
        for v in row {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    crate::mesh_io::ply::write_atomic(path, &bytes)?;
    let sidecar = serde_json::json!({
        "count": set.len(),
        "dim": set.dim(),
        "dtype": "f32_le",
    });
    let mut sidecar_path = path.as_os_str().to_owned();
    sidecar_path.push(".json");
    crate::mesh_io::ply::write_atomic(
        std::path::Path::new(&sidecar_path),
        &serde_json::to_vec_pretty(&sidecar).expect("static sidecar serializes"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_set(n: usize, d: usize, shift: f64, seed: u64) -> EmbeddingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vectors = (0..n)
            .map(|_| {
                (0..d)
                    .map(|j| {
                        let v: f64 = rng.sample(StandardNormal);
                        if j == 0 {
                            v + shift
                        } else {
                            v
                        }
                    })
                    .collect()
            })
            .collect();
        EmbeddingSet::new(vectors).unwrap()
    }

    #[test]
    fn identical_sets_score_zero() {
        let a = gaussian_set(300, 8, 0.0, 1);
        assert!(fid(&a, &a).unwrap() < 1e-6);
        assert!(kid(&a, &a).unwrap().abs() < 1e-9);
        let (p, r) = precision_recall(&a, &a, 3).unwrap();
        assert_eq!((p, r), (1.0, 1.0));
    }

    #[test]
    fn fid_of_shifted_gaussians_is_shift_squared() {
        let m = 1.5;
        let a = gaussian_set(5000, 8, 0.0, 2);
        let b = gaussian_set(5000, 8, m, 3);
        let f = fid(&a, &b).unwrap();
        let expected = m * m;
        assert!((f - expected).abs() / expected < 0.02, "fid {}", f);
        let swapped = fid(&b, &a).unwrap();
        assert!((f - swapped).abs() < 1e-9);
    }

    #[test]
    fn kid_separates_shifted_gaussians() {
        let a = gaussian_set(500, 8, 0.0, 4);
        let b = gaussian_set(500, 8, 1.0, 5);
        let same = kid(&a, &gaussian_set(500, 8, 0.0, 6)).unwrap();
        let diff = kid(&a, &b).unwrap();
        assert!(diff > same + 0.05, "same {} diff {}", same, diff);
        assert!(same > -0.05, "same-distribution KID far below zero: {}", same);
    }

    #[test]
    fn precision_zero_for_distant_clouds() {
        let a = gaussian_set(100, 4, 0.0, 7);
        let b = gaussian_set(100, 4, 100.0, 8);
        let (p, r) = precision_recall(&b, &a, 3).unwrap();
        assert_eq!(p, 0.0);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn precision_estimates_agree_across_draws() {
        // Monte-Carlo oracle: the same configuration re-drawn with fresh
        // seeds must estimate the same overlap within 5% relative.
        let runs: Vec<f64> = (0..3)
            .map(|s| {
                let refs = gaussian_set(2000, 2, 0.0, 10 + s);
                let gen = gaussian_set(2000, 2, 1.0, 20 + s);
                precision_recall(&gen, &refs, 3).unwrap().0
            })
            .collect();
        for w in runs.windows(2) {
            let rel = (w[0] - w[1]).abs() / w[0].max(w[1]);
            assert!(rel < 0.05, "runs {:?}", runs);
        }
        // A larger shift strictly reduces the overlap.
        let refs = gaussian_set(2000, 2, 0.0, 30);
        let far = gaussian_set(2000, 2, 3.0, 31);
        let p_far = precision_recall(&far, &refs, 3).unwrap().0;
        assert!(p_far < runs[0], "near {} far {}", runs[0], p_far);
    }

    #[test]
    fn k_larger_than_set_rejected() {
        let a = gaussian_set(4, 2, 0.0, 40);
        assert!(precision_recall(&a, &a, 4).is_err());
        assert!(precision_recall(&a, &a, 0).is_err());
    }

    #[test]
    fn ragged_and_non_finite_rejected() {
        assert!(EmbeddingSet::new(vec![vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(EmbeddingSet::new(vec![vec![f64::NAN]]).is_err());
        assert!(EmbeddingSet::new(vec![]).is_err());
    }

    #[test]
    fn csv_round_trip_and_header_skip() {
        let set = gaussian_set(20, 3, 0.0, 50);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.csv");
        save_embeddings_csv(&p, &set).unwrap();
        let loaded = load_embeddings_csv(&p).unwrap();
        assert_eq!(loaded.vectors, set.vectors);

        let with_header = format!("x,y,z\n{}", std::fs::read_to_string(&p).unwrap());
        std::fs::write(&p, with_header).unwrap();
        let loaded2 = load_embeddings_csv(&p).unwrap();
        assert_eq!(loaded2.vectors, set.vectors);

        std::fs::write(&p, "1.0,2.0\noops,3.0\n").unwrap();
        assert!(load_embeddings_csv(&p).is_err());
    }

    #[test]
    fn raw_round_trip_is_f32_exact() {
        let set = gaussian_set(17, 5, 0.0, 60);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.f32");
        save_embeddings_raw(&p, &set).unwrap();
        let loaded = load_embeddings_raw(&p).unwrap();
        assert_eq!(loaded.len(), 17);
        assert_eq!(loaded.dim(), 5);
        for (a, b) in loaded.vectors.iter().flatten().zip(set.vectors.iter().flatten()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        // Truncated payload caught against the sidecar.
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 4]).unwrap();
        assert!(load_embeddings_raw(&p).is_err());
    }

    #[test]
    fn underdetermined_flag() {
        assert!(gaussian_set(8, 8, 0.0, 70).is_underdetermined());
        assert!(!gaussian_set(9, 8, 0.0, 71).is_underdetermined());
    }
}
