//! Weight and checkpoint files.
//!
//! Weight file layout (all little-endian):
//!
//! ```text
//! magic  "MAVW" (4 bytes)
//! format version  u32
//! spec digest     32 bytes (SHA-256 of the spec's canonical JSON)
//! tensors         raw f64 data, parameter walk order, no per-tensor
//!                 framing (shapes are implied by the spec)
//! ```
//!
//! Checkpoints ("MAVC") append the next epoch index and the optimizer
//! velocity tensors after the weights so interrupted training resumes
//! bit-exactly.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::network::{build_network, Network};
use crate::nn::spec::NetworkSpec;
use crate::nn::tensor::Tensor;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"MAVW";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MAVC";
pub const FORMAT_VERSION: u32 = 1;

fn write_header<W: Write>(w: &mut W, magic: &[u8; 4], digest: &[u8; 32]) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(digest)?;
    Ok(())
}

fn write_tensors<W: Write>(w: &mut W, tensors: &[&Tensor]) -> Result<()> {
    for t in tensors {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<[u8; 32]> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| Error::CorruptFile("weight header truncated".into()))?;
    if &buf != magic {
        return Err(Error::CorruptFile(format!(
            "bad magic {:?}, expected {:?}",
            buf,
            std::str::from_utf8(magic).unwrap_or("?")
        )));
    }
    r.read_exact(&mut buf).map_err(|_| Error::CorruptFile("weight header truncated".into()))?;
    let version = u32::from_le_bytes(buf);
    if version != FORMAT_VERSION {
        return Err(Error::CorruptFile(format!("unsupported weight format version {version}")));
    }
    let mut digest = [0u8; 32];
    r.read_exact(&mut digest)
        .map_err(|_| Error::CorruptFile("weight header truncated".into()))?;
    Ok(digest)
}

fn read_into_tensors<R: Read>(r: &mut R, tensors: Vec<&mut Tensor>) -> Result<()> {
    let mut buf = [0u8; 8];
    for t in tensors {
        for v in t.data_mut() {
            r.read_exact(&mut buf)
                .map_err(|_| Error::CorruptFile("weight data truncated".into()))?;
            *v = f64::from_le_bytes(buf);
        }
    }
    Ok(())
}

fn expect_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(Error::CorruptFile("trailing bytes after weight data".into())),
    }
}

pub fn save_weights(net: &Network, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write_header(&mut w, WEIGHTS_MAGIC, &net.spec().digest())?;
    write_tensors(&mut w, &net.param_tensors())?;
    w.flush()?;
    Ok(())
}

/// Load weights for `spec`; the file must carry the same spec digest.
pub fn load_weights(path: &Path, spec: &NetworkSpec) -> Result<Network> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let digest = read_header(&mut r, WEIGHTS_MAGIC)?;
    if digest != spec.digest() {
        return Err(Error::IncompatibleWeights(format!(
            "weight file was written for a different architecture than '{}'",
            spec.name
        )));
    }
    let mut net = build_network(spec, 0)?;
    read_into_tensors(&mut r, net.param_tensors_mut())?;
    expect_eof(&mut r)?;
    Ok(net)
}

pub fn save_checkpoint(
    net: &Network,
    velocity: &[Tensor],
    next_epoch: usize,
    path: &Path,
) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let file = std::fs::File::create(&tmp)?;
        let mut w = BufWriter::new(file);
        write_header(&mut w, CHECKPOINT_MAGIC, &net.spec().digest())?;
        w.write_all(&(next_epoch as u32).to_le_bytes())?;
        write_tensors(&mut w, &net.param_tensors())?;
        write_tensors(&mut w, &velocity.iter().collect::<Vec<_>>())?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, spec: &NetworkSpec) -> Result<(Network, Vec<Tensor>, usize)> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let digest = read_header(&mut r, CHECKPOINT_MAGIC)?;
    if digest != spec.digest() {
        return Err(Error::IncompatibleWeights(
            "checkpoint belongs to a different architecture".into(),
        ));
    }
    let mut epoch_buf = [0u8; 4];
    r.read_exact(&mut epoch_buf)
        .map_err(|_| Error::CorruptFile("checkpoint truncated".into()))?;
    let next_epoch = u32::from_le_bytes(epoch_buf) as usize;
    let mut net = build_network(spec, 0)?;
    read_into_tensors(&mut r, net.param_tensors_mut())?;
    let mut velocity: Vec<Tensor> =
        net.param_tensors().iter().map(|t| Tensor::zeros(&t.shape())).collect();
    read_into_tensors(&mut r, velocity.iter_mut().collect())?;
    expect_eof(&mut r)?;
    Ok((net, velocity, next_epoch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::build_network;
    use crate::nn::spec::{tiny_preset, NetworkSpec};
    use crate::nn::tensor::Tensor;

    fn tempdir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "tomonav-weights-{}-{}",
            std::process::id(),
            std::time::SystemTime::now().elapsed().map(|d| d.subsec_nanos()).unwrap_or(0)
        ));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn weight_round_trip_preserves_outputs() {
        let spec = tiny_preset();
        let net = build_network(&spec, 5).unwrap();
        let dir = tempdir();
        let path = dir.join("w.mavw");
        save_weights(&net, &path).unwrap();
        let back = load_weights(&path, &spec).unwrap();
        for seed in 0..10u64 {
            let data: Vec<f64> =
                (0..1024).map(|i| (((i as u64).wrapping_mul(seed + 1) % 97) as f64) / 97.0).collect();
            let x = Tensor::new(&[1, 1, 32, 32], data).unwrap();
            assert_eq!(
                net.forward(&x).unwrap(),
                back.forward(&x).unwrap(),
                "round-tripped weights must give identical outputs"
            );
        }
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn wrong_spec_is_incompatible() {
        let spec = tiny_preset();
        let net = build_network(&spec, 5).unwrap();
        let dir = tempdir();
        let path = dir.join("w.mavw");
        save_weights(&net, &path).unwrap();
        let mut other = tiny_preset();
        other.name = "tiny-variant".into();
        match load_weights(&path, &other) {
            Err(crate::error::Error::IncompatibleWeights(_)) => {}
            other => panic!("expected incompatible-weights, got {other:?}"),
        }
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn truncated_and_padded_files_are_corrupt() {
        let spec = tiny_preset();
        let net = build_network(&spec, 5).unwrap();
        let dir = tempdir();
        let path = dir.join("w.mavw");
        save_weights(&net, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let short = dir.join("short.mavw");
        std::fs::write(&short, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(load_weights(&short, &spec), Err(crate::error::Error::CorruptFile(_))));

        let long = dir.join("long.mavw");
        let mut padded = bytes.clone();
        padded.extend_from_slice(&[0u8; 8]);
        std::fs::write(&long, &padded).unwrap();
        assert!(matches!(load_weights(&long, &spec), Err(crate::error::Error::CorruptFile(_))));
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn checkpoint_round_trip() {
        let spec = tiny_preset();
        let net = build_network(&spec, 5).unwrap();
        let velocity: Vec<Tensor> =
            net.param_tensors().iter().map(|t| Tensor::zeros(&t.shape())).collect();
        let dir = tempdir();
        let path = dir.join("ck.mavc");
        save_checkpoint(&net, &velocity, 3, &path).unwrap();
        let (net2, vel2, epoch) = load_checkpoint(&path, &spec).unwrap();
        assert_eq!(epoch, 3);
        assert_eq!(vel2.len(), velocity.len());
        assert_eq!(
            net.param_tensors().iter().map(|t| t.data().to_vec()).collect::<Vec<_>>(),
            net2.param_tensors().iter().map(|t| t.data().to_vec()).collect::<Vec<_>>()
        );
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn spec_digest_distinguishes_architectures() {
        let a = tiny_preset();
        let b = NetworkSpec { input_size: 48, ..tiny_preset() };
        assert_ne!(a.digest(), b.digest());
    }
}
