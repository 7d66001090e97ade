use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use framing_core::locgam::{HandCombo, LocationModel, LocationSource};
use framing_core::model::{IndexMap, ModelId, ModelInstance, ModelSpec};
use framing_core::pitchdata::{load_pitches, PitchRecord, StrikeZone};
use framing_core::sampler::{read_draws, DrawsMetadata, PosteriorDraws};
use framing_core::synth::TrueLocation;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// The location covariate source written by `fit-gam` or `simulate`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum LocationArtifact {
    Gam(LocationModel),
    Synthetic(TrueLocation),
}

impl LocationSource for LocationArtifact {
    fn raw_logodds(&self, x: f64, z: f64, combo: HandCombo) -> framing_core::Result<f64> {
        match self {
            LocationArtifact::Gam(m) => m.raw_logodds(x, z, combo),
            LocationArtifact::Synthetic(t) => t.raw_logodds(x, z, combo),
        }
    }

    fn mu_lo(&self) -> [f64; 4] {
        match self {
            LocationArtifact::Gam(m) => m.mu_lo,
            LocationArtifact::Synthetic(t) => t.mu_lo,
        }
    }
}

/// The structure a draws file belongs to.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SavedModel {
    pub spec: ModelSpec,
    pub index: IndexMap,
}

/// A fitted model as stored under `m<k>/`.
pub struct Fit {
    pub spec: ModelSpec,
    pub index: IndexMap,
    pub draws: PosteriorDraws,
}

/// Paths of every artifact in the output directory.
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Workspace {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn model_dir(&self, model: ModelId) -> Result<PathBuf> {
        let dir = self.root.join(format!("m{}", model.number()));
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    pub fn compare_dir(&self) -> Result<PathBuf> {
        let dir = self.root.join("compare");
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    /// Errors naming `step` unless `name` exists.
    pub fn require(&self, name: &str, step: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if !p.exists() {
            return Err(anyhow!("missing {}; run `framing {step}` first", p.display()));
        }
        Ok(p)
    }

    pub fn pitches(&self) -> Result<Vec<PitchRecord>> {
        let p = self.require("pitches.csv", "ingest` or `framing simulate")?;
        Ok(load_pitches(&p, None)?.records)
    }

    pub fn test_pitches(&self) -> Result<Option<Vec<PitchRecord>>> {
        let p = self.path("test_pitches.csv");
        if !p.exists() {
            return Ok(None);
        }
        Ok(Some(load_pitches(&p, None)?.records))
    }

    pub fn zone(&self) -> Result<StrikeZone> {
        read_json(&self.require("zone.json", "zone")?)
    }

    pub fn location(&self) -> Result<LocationArtifact> {
        read_json(&self.require("location.json", "fit-gam")?)
    }

    pub fn fit(&self, model: ModelId) -> Result<Fit> {
        let dir = format!("m{}", model.number());
        let meta_path = self.require(&format!("{dir}/draws.json"), &format!("fit --model {}", model.number()))?;
        let meta = DrawsMetadata::load(&meta_path)?;
        let draws = read_draws(self.path(&format!("{dir}/draws.bin")), &meta)?;
        let SavedModel { spec, mut index } = read_json(&self.path(&format!("{dir}/model.json")))?;
        index.rebuild_lookups();
        if draws.index_hash.as_deref() != Some(index.hash().as_str()) {
            return Err(anyhow!(
                "{dir}/draws.bin does not match {dir}/model.json; rerun `framing fit`"
            ));
        }
        Ok(Fit { spec, index, draws })
    }
}

impl Fit {
    pub fn instance(&self, data: &framing_core::model::Dataset) -> Result<ModelInstance> {
        Ok(ModelInstance::with_index(self.spec.clone(), self.index.clone(), data)?)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}
