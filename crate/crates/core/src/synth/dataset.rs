use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{generate_model, GenError, GenParams};
use crate::brep::format::FILE_EXTENSION;
use crate::brep::serialize_brep;

pub const MANIFEST_VERSION: &str = "1";
pub const MANIFEST_FILE: &str = "manifest.json";
/// Train, validation and test fractions.
pub const SPLIT_RATIOS: [f64; 3] = [0.65, 0.15, 0.20];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub file: String,
    pub k: usize,
    pub split: Split,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: String,
    pub params: GenParams,
    pub models: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest, GenError> {
        let text = std::fs::read_to_string(path).map_err(|e| GenError::Io(format!("{}: {e}", path.display())))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| GenError::Io(format!("{}: malformed manifest: {e}", path.display())))?;
        if m.format_version != MANIFEST_VERSION {
            return Err(GenError::Io(format!("{}: manifest format_version `{}`", path.display(), m.format_version)));
        }
        Ok(m)
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.models.iter().filter(move |m| m.split == split)
    }
}

/// Largest-remainder apportionment of `n` models; leftover models go to the
/// largest fractional parts, ties to the earlier split.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let quotas = ratios.map(|r| r * n as f64);
    let mut sizes = quotas.map(|q| q.floor() as usize);
    let mut left = n - sizes.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let (fa, fb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    sizes
}

/// Writes every model as `model_NNNNN.brep.json` plus `manifest.json` into `out_dir`.
pub fn generate_dataset(params: &GenParams, out_dir: &Path) -> Result<Manifest, GenError> {
    params.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| GenError::Io(format!("{}: {e}", out_dir.display())))?;
    let sizes = split_sizes(params.n_models, SPLIT_RATIOS);
    let mut models = Vec::with_capacity(params.n_models);
    for i in 0..params.n_models {
        let seed = params.model_seed(i);
        let m = generate_model(seed, params)?;
        let file = format!("model_{i:05}{FILE_EXTENSION}");
        let text = serialize_brep(&m.brep).map_err(|e| GenError::Io(e.to_string()))?;
        let path = out_dir.join(&file);
        std::fs::write(&path, text).map_err(|e| GenError::Io(format!("{}: {e}", path.display())))?;
        let split = if i < sizes[0] {
            Split::Train
        } else if i < sizes[0] + sizes[1] {
            Split::Val
        } else {
            Split::Test
        };
        models.push(ManifestEntry { file, k: m.k(), split, seed });
    }
    let manifest = Manifest { format_version: MANIFEST_VERSION.into(), params: params.clone(), models };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| GenError::Io(e.to_string()))?;
    text.push('\n');
    let path = out_dir.join(MANIFEST_FILE);
    std::fs::write(&path, text).map_err(|e| GenError::Io(format!("{}: {e}", path.display())))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_examples() {
        assert_eq!(split_sizes(100, SPLIT_RATIOS), [65, 15, 20]);
        assert_eq!(split_sizes(1, SPLIT_RATIOS), [1, 0, 0]);
        assert_eq!(split_sizes(0, SPLIT_RATIOS), [0, 0, 0]);
        for n in 0..300 {
            assert_eq!(split_sizes(n, SPLIT_RATIOS).iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn split_names_round_trip() {
        for s in Split::ALL {
            assert_eq!(Split::parse(s.name()), Some(s));
        }
    }
}
