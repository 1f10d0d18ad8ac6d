//! Labeled model corpora: generation, ground-truth annotation, and the
//! on-disk layout (one JSON file per model plus a manifest).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_topology, GraphTopology, StructureKind, CLASSIC_STRUCTURES};
use crate::model::{sample_mrf, BinaryMrf};
use crate::oracle::{enumerate, ENUMERATION_CAP};
use crate::rng;

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Exact targets attached to a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub marginals_p1: Vec<f64>,
    pub map_state: Vec<i8>,
}

/// One inference problem with its exact answers and corpus label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledModel {
    pub mrf: BinaryMrf,
    pub truth: GroundTruth,
    pub structure: String,
}

/// What to generate: structures, node count, and per-structure split sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub structures: Vec<String>,
    pub n: usize,
    pub train_per_structure: usize,
    pub val_per_structure: usize,
    pub test_per_structure: usize,
}

impl DatasetSpec {
    /// The full corpus: 13 structures at n = 9, split 100/20/10 each.
    pub fn paper_default() -> Self {
        Self {
            structures: CLASSIC_STRUCTURES.iter().map(|k| k.to_string()).collect(),
            n: 9,
            train_per_structure: 100,
            val_per_structure: 20,
            test_per_structure: 10,
        }
    }

    /// Same structures, scaled to `train` models per structure with the
    /// 10:2:1 split ratio.
    pub fn scaled(train_per_structure: usize, test_per_structure: usize) -> Self {
        Self {
            train_per_structure,
            val_per_structure: (train_per_structure / 5).max(1),
            test_per_structure,
            ..Self::paper_default()
        }
    }

    pub fn kinds(&self) -> Result<Vec<StructureKind>> {
        self.structures
            .iter()
            .map(|name| {
                StructureKind::parse(name)
                    .ok_or_else(|| Error::Contract(format!("unknown structure {name:?}")))
            })
            .collect()
    }

    fn per_structure_total(&self) -> usize {
        self.train_per_structure + self.val_per_structure + self.test_per_structure
    }
}

/// In-memory dataset with its generation record.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<LabeledModel>,
    pub val: Vec<LabeledModel>,
    pub test: Vec<LabeledModel>,
    pub seed: u64,
    pub spec: DatasetSpec,
}

impl Dataset {
    pub fn split(&self, name: &str) -> Option<&[LabeledModel]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    /// Models of one split grouped by structure, in spec order.
    pub fn by_structure<'a>(&self, split: &'a [LabeledModel]) -> Vec<(String, Vec<&'a LabeledModel>)> {
        let mut groups: Vec<(String, Vec<&LabeledModel>)> = Vec::new();
        for name in &self.spec.structures {
            let members: Vec<&LabeledModel> =
                split.iter().filter(|m| &m.structure == name).collect();
            groups.push((name.clone(), members));
        }
        groups
    }
}

/// Sample one labeled model on a fixed topology.
pub fn labeled_model(
    topology: &GraphTopology,
    structure: &str,
    seed: u64,
    index: u64,
) -> Result<LabeledModel> {
    let mut rng = rng::sub_rng(seed, index);
    let mrf = sample_mrf(topology, &mut rng);
    let oracle = enumerate(&mrf)?;
    Ok(LabeledModel {
        mrf,
        truth: GroundTruth {
            marginals_p1: oracle.marginals_p1,
            map_state: oracle.map_state,
        },
        structure: structure.to_string(),
    })
}

/// Generate the corpus: for every structure, a fixed topology with
/// randomized parameters per model, each annotated by enumeration.
/// Every model draws from the sub-stream `(seed, global model index)`,
/// so generation order does not matter.
pub fn generate_dataset(spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
    if spec.n > ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            n: spec.n,
            cap: ENUMERATION_CAP,
        });
    }
    let kinds = spec.kinds()?;
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    let mut index = 0u64;
    for kind in kinds {
        let topology = build_topology(kind, spec.n)?;
        let name = kind.to_string();
        for slot in 0..spec.per_structure_total() {
            let model = labeled_model(&topology, &name, seed, index)?;
            index += 1;
            if slot < spec.train_per_structure {
                train.push(model);
            } else if slot < spec.train_per_structure + spec.val_per_structure {
                val.push(model);
            } else {
                test.push(model);
            }
        }
    }
    Ok(Dataset {
        train,
        val,
        test,
        seed,
        spec: spec.clone(),
    })
}

/// On-disk model record: topology, parameters, and exact targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(rename = "J")]
    pub j: Vec<f64>,
    pub b: Vec<f64>,
    pub truth: GroundTruth,
}

impl ModelFile {
    pub fn from_model(model: &LabeledModel) -> Self {
        Self {
            n: model.mrf.n(),
            edges: model.mrf.topology().edges().iter().map(|&(i, j)| [i, j]).collect(),
            j: model.mrf.couplings().to_vec(),
            b: model.mrf.biases().to_vec(),
            truth: model.truth.clone(),
        }
    }

    pub fn into_model(self, structure: &str) -> Result<LabeledModel> {
        let topology =
            GraphTopology::new(self.n, self.edges.iter().map(|e| (e[0], e[1])).collect())?;
        let mrf = BinaryMrf::new(topology, self.j, self.b)?;
        if self.truth.marginals_p1.len() != mrf.n() || self.truth.map_state.len() != mrf.n() {
            return Err(Error::Contract("truth length does not match n".into()));
        }
        Ok(LabeledModel {
            mrf,
            truth: self.truth,
            structure: structure.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub structure: String,
    pub path: String,
}

/// Manifest written next to the model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub seed: u64,
    pub spec: DatasetSpec,
    pub train: Vec<ManifestEntry>,
    pub val: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
}

fn write_split(
    dir: &Path,
    split_name: &str,
    models: &[LabeledModel],
) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (i, model) in models.iter().enumerate() {
        let rel = format!("models/{split_name}_{}_{i:04}.json", model.structure);
        let file = ModelFile::from_model(model);
        fs::write(dir.join(&rel), serde_json::to_string(&file)?)?;
        entries.push(ManifestEntry {
            structure: model.structure.clone(),
            path: rel,
        });
    }
    Ok(entries)
}

/// Write `manifest.json` plus one model file per entry under `dir/models/`.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir.join("models"))?;
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        seed: dataset.seed,
        spec: dataset.spec.clone(),
        train: write_split(dir, "train", &dataset.train)?,
        val: write_split(dir, "val", &dataset.val)?,
        test: write_split(dir, "test", &dataset.test)?,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

fn read_split(dir: &Path, entries: &[ManifestEntry]) -> Result<Vec<LabeledModel>> {
    entries
        .iter()
        .map(|entry| {
            let text = fs::read_to_string(dir.join(&entry.path))?;
            let file: ModelFile = serde_json::from_str(&text)?;
            file.into_model(&entry.structure)
        })
        .collect()
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: DatasetManifest =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    Ok(Dataset {
        train: read_split(dir, &manifest.train)?,
        val: read_split(dir, &manifest.val)?,
        test: read_split(dir, &manifest.test)?,
        seed: manifest.seed,
        spec: manifest.spec,
    })
}
