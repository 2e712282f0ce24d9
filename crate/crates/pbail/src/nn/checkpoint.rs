//! Versioned binary checkpoint format for named networks.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "PBAIL-NN" | version u32 | net_count u32
//! per net:
//!   name_len u32 | name utf-8
//!   hidden_act u8 | output_act u8 | spectral u8 | n_layers u32
//!   per layer: in u32 | out u32
//!   per layer: w f64*(in*out) | b f64*out | [u f64*in | v f64*out]
//! ```
//!
//! The power-iteration vectors ride along with spectral layers so a reloaded
//! network reproduces its effective (normalized) weights bit-for-bit.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::mlp::{Activation, Layer, Mlp, OutputActivation};
use crate::nn::spectral::SpectralState;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"PBAIL-NN";
const VERSION: u32 = 1;

/// Serializes named networks to the checkpoint byte format.
pub fn encode_nets(nets: &[(&str, &Mlp<f64>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(nets.len() as u32).to_le_bytes());
    for (name, net) in nets {
        let name_bytes = name.as_bytes();
        out.extend_from_slice(&(name_bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(name_bytes);
        out.push(match net.hidden_activation() {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        });
        out.push(match net.output_activation() {
            OutputActivation::Identity => 0,
            OutputActivation::Tanh => 1,
            OutputActivation::Sigmoid => 2,
        });
        out.push(net.is_spectral() as u8);
        out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
        for layer in net.layers() {
            out.extend_from_slice(&(layer.w.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(layer.w.cols() as u32).to_le_bytes());
        }
        for (idx, layer) in net.layers().iter().enumerate() {
            for &x in layer.w.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
            for &x in layer.b.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
            if let Some(states) = net.spectral_states() {
                for &x in states[idx].u.data() {
                    out.extend_from_slice(&x.to_le_bytes());
                }
                for &x in states[idx].v.data() {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
    }
    out
}

/// Byte-slice reader shared by the little-endian binary formats in this
/// crate. Every read is bounds-checked and reports the failing offset.
pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "file truncated at byte {} (wanted {} more)",
                self.pos, n
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    /// One f64, finiteness not enforced.
    pub(crate) fn f64_raw(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// `n` f64 values that must all be finite.
    pub(crate) fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        let mut out = Vec::with_capacity(n);
        for chunk in raw.chunks_exact(8) {
            let x = f64::from_le_bytes(chunk.try_into().unwrap());
            if !x.is_finite() {
                return Err(Error::Format("non-finite parameter in checkpoint".into()));
            }
            out.push(x);
        }
        Ok(out)
    }

    /// Errors unless every byte has been consumed.
    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Parses the checkpoint byte format back into named networks.
pub fn decode_nets(bytes: &[u8]) -> Result<Vec<(String, Mlp<f64>)>> {
    let mut cur = Cursor::new(bytes);
    if cur.take(8)? != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let net_count = cur.u32()? as usize;
    let mut nets = Vec::with_capacity(net_count);
    for _ in 0..net_count {
        let name_len = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| Error::Format("checkpoint net name is not utf-8".into()))?;
        let hidden = match cur.u8()? {
            0 => Activation::Relu,
            1 => Activation::Tanh,
            other => return Err(Error::Format(format!("bad hidden activation tag {other}"))),
        };
        let output = match cur.u8()? {
            0 => OutputActivation::Identity,
            1 => OutputActivation::Tanh,
            2 => OutputActivation::Sigmoid,
            other => return Err(Error::Format(format!("bad output activation tag {other}"))),
        };
        let spectral = match cur.u8()? {
            0 => false,
            1 => true,
            other => return Err(Error::Format(format!("bad spectral tag {other}"))),
        };
        let n_layers = cur.u32()? as usize;
        if n_layers == 0 {
            return Err(Error::Format("checkpoint net has zero layers".into()));
        }
        let mut dims = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let fan_in = cur.u32()? as usize;
            let fan_out = cur.u32()? as usize;
            if fan_in == 0 || fan_out == 0 {
                return Err(Error::Format("checkpoint layer with zero dim".into()));
            }
            dims.push((fan_in, fan_out));
        }
        let mut layers = Vec::with_capacity(n_layers);
        let mut states = Vec::with_capacity(n_layers);
        for &(fan_in, fan_out) in &dims {
            let w = Tensor::new(fan_in, fan_out, cur.f64_vec(fan_in * fan_out)?)?;
            let b = Tensor::new(1, fan_out, cur.f64_vec(fan_out)?)?;
            layers.push(Layer { w, b });
            if spectral {
                let u = Tensor::new(1, fan_in, cur.f64_vec(fan_in)?)?;
                let v = Tensor::new(fan_out, 1, cur.f64_vec(fan_out)?)?;
                states.push(SpectralState { u, v });
            }
        }
        let net = Mlp::from_parts(layers, hidden, output, spectral.then_some(states))?;
        nets.push((name, net));
    }
    cur.finish()?;
    Ok(nets)
}

/// Writes named networks to `path` in the checkpoint format.
pub fn save_nets(path: &Path, nets: &[(&str, &Mlp<f64>)]) -> Result<()> {
    fs::write(path, encode_nets(nets))?;
    Ok(())
}

/// Reads named networks from `path`.
pub fn load_nets(path: &Path) -> Result<Vec<(String, Mlp<f64>)>> {
    decode_nets(&fs::read(path)?)
}

/// Pulls one named network out of a loaded checkpoint.
pub fn take_net(nets: &mut Vec<(String, Mlp<f64>)>, name: &str) -> Result<Mlp<f64>> {
    let idx = nets
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| Error::Format(format!("checkpoint has no net named {name:?}")))?;
    Ok(nets.remove(idx).1)
}

/// Hex SHA-256 of arbitrary bytes; used to fingerprint frozen parameters.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::{Activation, OutputActivation};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn sample_net(seed: u64, spectral: bool) -> Mlp<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Mlp::new(
            &[3, 4, 2],
            Activation::Relu,
            OutputActivation::Identity,
            spectral,
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let a = sample_net(1, false);
        let b = sample_net(2, true);
        let bytes = encode_nets(&[("actor", &a), ("reward", &b)]);
        let decoded = decode_nets(&bytes).unwrap();
        assert_eq!(decoded.len(), 2);
        assert_eq!(decoded[0].0, "actor");
        assert_eq!(decoded[0].1, a);
        assert_eq!(decoded[1].0, "reward");
        assert_eq!(decoded[1].1, b);
        // Effective eval path also identical, spectral vectors included.
        let x = Tensor::row(&[0.3, -0.5, 1.1]);
        assert_eq!(
            decoded[1].1.eval(&x).unwrap().data(),
            b.eval(&x).unwrap().data()
        );
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let net = sample_net(3, false);
        let mut bytes = encode_nets(&[("n", &net)]);
        let mut corrupted = bytes.clone();
        corrupted[0] = b'X';
        assert!(decode_nets(&corrupted).is_err());
        bytes.truncate(bytes.len() - 3);
        assert!(decode_nets(&bytes).is_err());
    }

    #[test]
    fn rejects_trailing_garbage() {
        let net = sample_net(4, false);
        let mut bytes = encode_nets(&[("n", &net)]);
        bytes.push(0);
        assert!(decode_nets(&bytes).is_err());
    }

    #[test]
    fn take_net_finds_by_name() {
        let a = sample_net(5, false);
        let bytes = encode_nets(&[("actor", &a)]);
        let mut nets = decode_nets(&bytes).unwrap();
        assert!(take_net(&mut nets, "missing").is_err());
        let got = take_net(&mut nets, "actor").unwrap();
        assert_eq!(got, a);
    }

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn round_trip_any_small_net(
            seed in 0u64..1_000_000,
            d0 in 1usize..5,
            d1 in 1usize..6,
            d2 in 1usize..4,
            spectral in proptest::bool::ANY,
        ) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let net = Mlp::<f64>::new(
                &[d0, d1, d2],
                Activation::Tanh,
                OutputActivation::Sigmoid,
                spectral,
                &mut rng,
            ).unwrap();
            let bytes = encode_nets(&[("net", &net)]);
            let decoded = decode_nets(&bytes).unwrap();
            prop_assert_eq!(&decoded[0].1, &net);
            let again = encode_nets(&[("net", &decoded[0].1)]);
            prop_assert_eq!(again, bytes);
        }
    }
}
