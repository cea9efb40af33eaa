//! Binary model checkpoints. A checkpoint carries the architecture, all
//! parameters, and the provenance needed to refuse mismatched reuse: the
//! hash of the correlation matrix it was trained against, the tensor
//! settings, and the run seed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::binio;
use crate::error::{Error, Result};
use crate::tensor::{TensorConfig, TimeTransform};

use super::{ArchConfig, Model};

const MAGIC: &[u8; 8] = b"GLNNCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub matrix_hash: String,
    pub tensor_config: TensorConfig,
    pub seed: u64,
}

fn transform_code(t: TimeTransform) -> u32 {
    match t {
        TimeTransform::LogDays => 0,
        TimeTransform::Identity => 1,
    }
}

fn transform_from_code(code: u32) -> Option<TimeTransform> {
    match code {
        0 => Some(TimeTransform::LogDays),
        1 => Some(TimeTransform::Identity),
        _ => None,
    }
}

pub fn save_checkpoint(path: &Path, model: &Model, meta: &CheckpointMeta) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| Error::io(path, e);

    w.write_all(MAGIC).map_err(io)?;
    binio::write_u32(&mut w, VERSION).map_err(io)?;
    binio::write_str(&mut w, &meta.matrix_hash).map_err(io)?;
    binio::write_u32(&mut w, meta.tensor_config.words_per_doc as u32).map_err(io)?;
    binio::write_u32(&mut w, meta.tensor_config.max_docs as u32).map_err(io)?;
    binio::write_u32(&mut w, meta.tensor_config.max_checkins as u32).map_err(io)?;
    binio::write_u32(&mut w, transform_code(meta.tensor_config.time_transform)).map_err(io)?;
    binio::write_u64(&mut w, meta.seed).map_err(io)?;

    let arch = &model.arch;
    binio::write_u32(&mut w, arch.input_channels as u32).map_err(io)?;
    binio::write_u32(&mut w, arch.conv1_out as u32).map_err(io)?;
    binio::write_u32(&mut w, arch.conv2_out as u32).map_err(io)?;
    for group in [arch.kernel, arch.pad, arch.pool1, arch.pool2] {
        for dim in group {
            binio::write_u32(&mut w, dim as u32).map_err(io)?;
        }
    }
    binio::write_u32(&mut w, arch.mlp_hidden.len() as u32).map_err(io)?;
    for &dim in &arch.mlp_hidden {
        binio::write_u32(&mut w, dim as u32).map_err(io)?;
    }

    let params = model.flatten_params();
    binio::write_u64(&mut w, params.len() as u64).map_err(io)?;
    for &p in &params {
        binio::write_f64(&mut w, p).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = binio::Reader::new(BufReader::new(file));
    let fail = |m: String| Error::schema(path, m);

    r.magic(MAGIC).map_err(fail)?;
    let version = r.u32().map_err(fail)?;
    if version != VERSION {
        return Err(Error::schema(
            path,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let matrix_hash = r.str().map_err(fail)?;
    let words_per_doc = r.u32().map_err(fail)? as usize;
    let max_docs = r.u32().map_err(fail)? as usize;
    let max_checkins = r.u32().map_err(fail)? as usize;
    let code = r.u32().map_err(fail)?;
    let time_transform = transform_from_code(code)
        .ok_or_else(|| Error::schema(path, format!("unknown time transform code {code}")))?;
    let seed = r.u64().map_err(fail)?;

    let input_channels = r.u32().map_err(fail)? as usize;
    let conv1_out = r.u32().map_err(fail)? as usize;
    let conv2_out = r.u32().map_err(fail)? as usize;
    let mut groups = [[0usize; 3]; 4];
    for group in &mut groups {
        for dim in group.iter_mut() {
            *dim = r.u32().map_err(fail)? as usize;
        }
    }
    let hidden_len = r.u32().map_err(fail)? as usize;
    let mut mlp_hidden = Vec::with_capacity(hidden_len);
    for _ in 0..hidden_len {
        mlp_hidden.push(r.u32().map_err(fail)? as usize);
    }

    let arch = ArchConfig {
        input_channels,
        conv1_out,
        conv2_out,
        kernel: groups[0],
        pad: groups[1],
        pool1: groups[2],
        pool2: groups[3],
        mlp_hidden,
    };
    let mut model = Model::new(arch, 0).map_err(|e| match e {
        Error::Config(m) => Error::schema(path, format!("invalid architecture: {m}")),
        other => other,
    })?;

    let param_count = r.u64().map_err(fail)? as usize;
    if param_count != model.param_count() {
        return Err(Error::schema(
            path,
            format!(
                "parameter count {} does not match architecture ({} expected)",
                param_count,
                model.param_count()
            ),
        ));
    }
    let mut params = Vec::with_capacity(param_count);
    for _ in 0..param_count {
        params.push(r.f64().map_err(fail)?);
    }
    r.expect_eof().map_err(fail)?;
    model.set_flat_params(&params)?;

    let meta = CheckpointMeta {
        matrix_hash,
        tensor_config: TensorConfig {
            words_per_doc,
            max_docs,
            max_checkins,
            time_transform,
        },
        seed,
    };
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Seek, SeekFrom};

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            matrix_hash: "ab".repeat(32),
            tensor_config: TensorConfig {
                words_per_doc: 12,
                max_docs: 6,
                max_checkins: 7,
                time_transform: TimeTransform::LogDays,
            },
            seed: 77,
        }
    }

    fn small_model(seed: u64) -> Model {
        Model::new(
            ArchConfig {
                input_channels: 2,
                conv1_out: 3,
                conv2_out: 2,
                kernel: [3, 3, 3],
                pad: [1, 1, 1],
                pool1: [3, 3, 4],
                pool2: [2, 2, 2],
                mlp_hidden: vec![5],
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = small_model(123);
        save_checkpoint(&path, &model, &meta()).unwrap();
        let (loaded, loaded_meta) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.arch, model.arch);
        assert_eq!(loaded.flatten_params(), model.flatten_params());
        assert_eq!(loaded_meta, meta());
    }

    #[test]
    fn save_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        let model = small_model(5);
        save_checkpoint(&a, &model, &meta()).unwrap();
        save_checkpoint(&b, &model, &meta()).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &small_model(1), &meta()).unwrap();
        let mut file = std::fs::OpenOptions::new().write(true).open(&path).unwrap();
        file.seek(SeekFrom::Start(0)).unwrap();
        file.write_all(b"XXXXXXXX").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Schema { .. })));
    }

    #[test]
    fn truncation_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &small_model(1), &meta()).unwrap();
        let mut bytes = Vec::new();
        File::open(&path).unwrap().read_to_end(&mut bytes).unwrap();
        bytes.truncate(bytes.len() - 9);
        std::fs::write(&path, &bytes).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Schema { message, .. }) => {
                assert!(message.contains("truncated"), "message: {message}")
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &small_model(1), &meta()).unwrap();
        let mut file = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
        file.write_all(&[0u8; 4]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Schema { .. })));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        assert!(matches!(
            load_checkpoint(Path::new("/nonexistent/model.ckpt")),
            Err(Error::Io { .. })
        ));
    }
}
