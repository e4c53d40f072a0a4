//! TOML configuration files.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};
use crate::harness::generate::GenConfig;
use crate::training::TrainConfig;

fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(toml::from_str(&text)?)
}

/// Missing keys take their defaults; unknown keys are rejected.
pub fn load_train_config(path: &Path) -> Result<TrainConfig> {
    let cfg: TrainConfig = load(path)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_gen_config(path: &Path) -> Result<GenConfig> {
    let cfg: GenConfig = load(path)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_files_fill_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.toml");
        fs::write(&path, "epochs = 3\nmarginalization = false\n").unwrap();
        let cfg = load_train_config(&path).unwrap();
        assert_eq!(cfg.epochs, 3);
        assert!(!cfg.marginalization);
        assert_eq!(cfg.negative_downsample_k, 7);

        let path = dir.path().join("gen.toml");
        fs::write(&path, "n_questions = 9\n[answer_type_mix]\nnone = 0.0\nyes_no = 0.0\nspan = 1.0\nnumber = 0.0\n").unwrap();
        let cfg = load_gen_config(&path).unwrap();
        assert_eq!(cfg.n_questions, 9);
        assert_eq!(cfg.answer_type_mix.span, 1.0);
    }

    #[test]
    fn bad_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.toml");
        fs::write(&path, "epochs = 3\nmomentum = 0.9\n").unwrap();
        assert!(matches!(load_train_config(&path), Err(Error::Toml(_))));
        fs::write(&path, "epochs = 0\n").unwrap();
        assert!(matches!(load_train_config(&path), Err(Error::Config(_))));
        assert!(matches!(load_gen_config(&dir.path().join("missing.toml")), Err(Error::Io { .. })));
    }
}
