use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PolicyParameters;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "omar-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    #[serde(flatten)]
    params: PolicyParameters,
}

pub fn save_checkpoint(path: &Path, params: &PolicyParameters) -> Result<()> {
    let env = Envelope { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, params: params.clone() };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &env)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Load a policy checkpoint. When `expected` is given as
/// `(vocab_size, feature_dim, embed_dim)` any mismatch is rejected.
pub fn load_checkpoint(path: &Path, expected: Option<(usize, usize, usize)>) -> Result<PolicyParameters> {
    let file = File::open(path)
        .map_err(|e| Error::InvalidInput(format!("cannot open checkpoint {}: {e}", path.display())))?;
    let env: Envelope = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::InvalidInput(format!("checkpoint {}: {e}", path.display())))?;
    if env.format != CHECKPOINT_FORMAT {
        return Err(Error::InvalidInput(format!("not a policy checkpoint (format {:?})", env.format)));
    }
    if env.version != CHECKPOINT_VERSION {
        return Err(Error::InvalidInput(format!("unsupported checkpoint version {}", env.version)));
    }
    env.params.validate()?;
    if let Some((v, f, d)) = expected {
        let p = &env.params;
        if (p.vocab_size, p.feature_dim, p.embed_dim) != (v, f, d) {
            return Err(Error::Shape(format!(
                "checkpoint shape (vocab {}, features {}, embed {}) does not match expected ({v}, {f}, {d})",
                p.vocab_size, p.feature_dim, p.embed_dim
            )));
        }
    }
    Ok(env.params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn round_trip_and_shape_rejection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let p = PolicyParameters::initialize(10, 64, 4, 8, 77, 0.1, &mut stream(1, "init", &[]));
        save_checkpoint(&path, &p).unwrap();
        assert_eq!(load_checkpoint(&path, Some((10, 64, 4))).unwrap(), p);
        assert!(matches!(load_checkpoint(&path, Some((11, 64, 4))), Err(Error::Shape(_))));

        let mut broken = p.clone();
        broken.value_weights.pop();
        save_checkpoint(&path, &broken).unwrap();
        assert!(matches!(load_checkpoint(&path, None), Err(Error::Shape(_))));
    }
}
