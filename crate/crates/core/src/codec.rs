//! Binary container for [`SkinningModel`] and size accounting.
//!
//! Layout, all little-endian:
//!
//! | block      | contents                                                     | bytes      |
//! |------------|--------------------------------------------------------------|------------|
//! | header     | magic `SKND`, version `u16`, `B` `u16`, `N` `u32`, `P` `u32` | 16         |
//! | rest pose  | `N` points as 3 x `f32`                                      | `12 N`     |
//! | weights    | `N` x 6 slots of (`u16` bone, `f32` weight)                  | `36 N`     |
//! | transforms | `P` x `B` row-major 3x4 `f32` matrices                       | `48 B P`   |
//! | faces      | triples of `u32`, to the end of the stream                   | `12 F`     |
//!
//! Unused weight slots hold bone `0xFFFF` and weight 0.

use crate::anim::{Affine, BoneTransformSet, SkinningModel, Vec3, WeightMap, MAX_INFLUENCES};
use crate::error::{Error, Result};
use crate::metrics::{size_report, SizeReport};
use crate::AnimSequence;

pub const MAGIC: [u8; 4] = *b"SKND";
pub const VERSION: u16 = 1;
pub const HEADER_BYTES: usize = 16;
/// Bone id written into unused weight slots.
pub const EMPTY_SLOT: u16 = 0xFFFF;
/// Largest bone count whose ids fit beside the empty-slot marker.
pub const MAX_BONES: usize = EMPTY_SLOT as usize;

const SLOT_BYTES: usize = 6;
const FACE_BYTES: usize = 12;

/// Exact encoded size of a model.
pub fn encoded_len(vertices: usize, frames: usize, bones: usize, faces: usize) -> usize {
    HEADER_BYTES + 12 * vertices + SLOT_BYTES * MAX_INFLUENCES * vertices + 48 * bones * frames + FACE_BYTES * faces
}

fn to_f32(x: f64, what: &'static str) -> Result<f32> {
    let y = x as f32;
    if y.is_finite() {
        Ok(y)
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Rounds convex weights to `f32` so that renormalizing the rounded values
/// in `f64` and rounding again gives the same `f32`s. This makes
/// encode, decode, encode reproduce the first encoding byte for byte.
fn quantize_weights(weights: &[f64]) -> Vec<f32> {
    let mut q: Vec<f32> = weights.iter().map(|&w| w as f32).collect();
    for _ in 0..16 {
        let sum: f64 = q.iter().map(|&x| f64::from(x)).sum();
        if sum <= 0.0 {
            break;
        }
        let next: Vec<f32> = q.iter().map(|&x| (f64::from(x) / sum) as f32).collect();
        if next == q {
            break;
        }
        q = next;
    }
    q
}

/// Serializes a model. Bone counts above [`MAX_BONES`] - 1 are rejected.
pub fn encode(model: &SkinningModel) -> Result<Vec<u8>> {
    let (n, p, b) = (model.vertex_count(), model.frame_count(), model.bone_count());
    if b >= MAX_BONES {
        return Err(Error::InvalidArgument(format!("{b} bones; the container holds at most {}", MAX_BONES - 1)));
    }
    let too_big = |what: &str, v: usize| Error::InvalidArgument(format!("{what} {v} does not fit in 32 bits"));
    let n32 = u32::try_from(n).map_err(|_| too_big("vertex count", n))?;
    let p32 = u32::try_from(p).map_err(|_| too_big("frame count", p))?;

    let mut out = Vec::with_capacity(encoded_len(n, p, b, model.faces().len()));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(b as u16).to_le_bytes());
    out.extend_from_slice(&n32.to_le_bytes());
    out.extend_from_slice(&p32.to_le_bytes());

    for v in model.rest_pose() {
        for &c in v.iter() {
            out.extend_from_slice(&to_f32(c, "rest pose")?.to_le_bytes());
        }
    }
    for influences in model.weights().influences() {
        let raw: Vec<f64> = influences.iter().map(|&(_, w)| w).collect();
        let q = quantize_weights(&raw);
        for slot in 0..MAX_INFLUENCES {
            let (bone, w) = match influences.get(slot) {
                Some(&(bone, _)) => (bone as u16, q[slot]),
                None => (EMPTY_SLOT, 0.0),
            };
            out.extend_from_slice(&bone.to_le_bytes());
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    for frame in model.transforms().frames() {
        for t in frame {
            for r in 0..3 {
                for c in 0..4 {
                    out.extend_from_slice(&to_f32(t[(r, c)], "bone transforms")?.to_le_bytes());
                }
            }
        }
    }
    for face in model.faces() {
        for &i in face {
            out.extend_from_slice(&(i as u32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const K: usize>(&mut self) -> [u8; K] {
        let out = self.bytes[self.pos..self.pos + K].try_into().expect("length checked up front");
        self.pos += K;
        out
    }

    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }

    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take())
    }
}

/// Parses a container produced by [`encode`]. Weights are renormalized to
/// sum to one; the full model is validated before it is returned.
pub fn decode(bytes: &[u8]) -> Result<SkinningModel> {
    if bytes.len() < HEADER_BYTES {
        return Err(Error::Truncated { needed: HEADER_BYTES, found: bytes.len() });
    }
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = r.u16();
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let b = r.u16() as usize;
    let n = r.u32() as usize;
    let p = r.u32() as usize;
    let fixed = encoded_len(n, p, b, 0);
    if bytes.len() < fixed {
        return Err(Error::Truncated { needed: fixed, found: bytes.len() });
    }
    let tail = bytes.len() - fixed;
    if tail % FACE_BYTES != 0 {
        return Err(Error::Truncated { needed: fixed + tail.next_multiple_of(FACE_BYTES), found: bytes.len() });
    }

    let rest: Vec<Vec3> = (0..n)
        .map(|_| Vec3::new(f64::from(r.f32()), f64::from(r.f32()), f64::from(r.f32())))
        .collect();
    let mut rows = Vec::with_capacity(n);
    for vertex in 0..n {
        let mut row = Vec::with_capacity(MAX_INFLUENCES);
        for _ in 0..MAX_INFLUENCES {
            let (bone, w) = (r.u16(), r.f32());
            if bone != EMPTY_SLOT {
                row.push((bone as usize, f64::from(w)));
            } else if w != 0.0 {
                return Err(Error::InvalidWeights { vertex, reason: format!("empty slot carries weight {w}") });
            }
        }
        let sum: f64 = row.iter().map(|&(_, w)| w).sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::InvalidWeights { vertex, reason: format!("weights sum to {sum}") });
        }
        row.iter_mut().for_each(|(_, w)| *w /= sum);
        rows.push(row);
    }
    let weights = WeightMap::new(rows)?;
    let transforms = (0..p)
        .map(|_| {
            (0..b)
                .map(|_| {
                    let vals: Vec<f64> = (0..12).map(|_| f64::from(r.f32())).collect();
                    Affine::from_row_slice(&vals)
                })
                .collect()
        })
        .collect();
    let transforms = BoneTransformSet::new(b, transforms)?;
    let faces = (0..tail / FACE_BYTES)
        .map(|_| [r.u32() as usize, r.u32() as usize, r.u32() as usize])
        .collect();
    if rest.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
        return Err(Error::NonFinite("rest pose"));
    }
    SkinningModel::new(rest, weights, transforms, faces)
}

/// Raw and compressed value counts for `model` standing in for `seq`.
pub fn report_sizes(model: &SkinningModel, seq: &AnimSequence) -> Result<SizeReport> {
    if model.vertex_count() != seq.vertex_count() || model.frame_count() != seq.frame_count() {
        return Err(Error::ShapeMismatch(format!(
            "model is {} vertices x {} frames, animation is {} x {}",
            model.vertex_count(),
            model.frame_count(),
            seq.vertex_count(),
            seq.frame_count()
        )));
    }
    size_report(model.vertex_count(), model.frame_count(), model.bone_count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anim::{lbs_sequence, make_synthetic_rig};
    use crate::metrics::{compression_rate, erms};
    use proptest::prelude::*;

    fn rig_model(bones: usize, seed: u64) -> (AnimSequence, SkinningModel) {
        let (seq, w, t) = make_synthetic_rig(bones, 20, 6, seed).unwrap();
        let model = SkinningModel::new(seq.rest_pose().to_vec(), w, t, seq.faces().to_vec()).unwrap();
        (seq, model)
    }

    #[test]
    fn byte_length_matches_layout() {
        let (_, model) = rig_model(3, 1);
        let bytes = encode(&model).unwrap();
        let (n, p, b, f) = (model.vertex_count(), model.frame_count(), 3, model.faces().len());
        assert_eq!(bytes.len(), 16 + 12 * n + 36 * n + 48 * b * p + 12 * f);
    }

    #[test]
    fn deterministic_and_idempotent() {
        let (_, model) = rig_model(4, 2);
        let first = encode(&model).unwrap();
        assert_eq!(first, encode(&model).unwrap());
        assert_eq!(encode(&decode(&first).unwrap()).unwrap(), first);
    }

    #[test]
    fn round_trip_close_to_original() {
        let (seq, model) = rig_model(3, 5);
        let decoded = decode(&encode(&model).unwrap()).unwrap();
        assert_eq!(decoded.faces(), model.faces());
        for (a, b) in decoded.weights().influences().iter().zip(model.weights().influences()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.0, y.0);
                assert!((x.1 - y.1).abs() < 1e-6);
            }
        }
        let before = erms(&seq, &lbs_sequence(&model).unwrap()).unwrap();
        let after = erms(&seq, &lbs_sequence(&decoded).unwrap()).unwrap();
        assert!((before - after).abs() < 1e-4, "{before} vs {after}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(decode(&[]), Err(Error::Truncated { found: 0, .. })));
        let (_, model) = rig_model(2, 0);
        let mut bytes = encode(&model).unwrap();
        assert!(matches!(decode(&bytes[..bytes.len() - 5]), Err(Error::Truncated { .. })));
        assert!(matches!(decode(&bytes[..40]), Err(Error::Truncated { .. })));
        bytes[0] = b'X';
        assert_eq!(decode(&bytes), Err(Error::BadMagic(*b"XKND")));
        bytes[0] = b'S';
        bytes[4] = 9;
        assert_eq!(decode(&bytes), Err(Error::UnsupportedVersion(9)));
    }

    #[test]
    fn rejects_bone_out_of_range() {
        let (_, model) = rig_model(2, 0);
        let mut bytes = encode(&model).unwrap();
        // first slot of vertex 0 points at bone 7 of 2
        let slot = HEADER_BYTES + 12 * model.vertex_count();
        bytes[slot..slot + 2].copy_from_slice(&7u16.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(Error::BoneOutOfRange { index: 7, count: 2 })));
    }

    #[test]
    fn too_many_bones() {
        let rest = vec![Vec3::zeros()];
        let t = BoneTransformSet::identity(MAX_BONES, 1);
        let model = SkinningModel::new(rest, WeightMap::rigid(1), t, vec![]).unwrap();
        assert!(encode(&model).is_err());
    }

    #[test]
    fn sizes_agree_with_compression_rate() {
        let (seq, model) = rig_model(3, 3);
        let r = report_sizes(&model, &seq).unwrap();
        let (n, p) = (seq.vertex_count() as u64, seq.frame_count() as u64);
        assert_eq!(r.raw_values, 3 * n * p);
        assert_eq!(r.compressed_values, 9 * n + 12 * 3 * p);
        assert_eq!(r.crp, compression_rate(seq.vertex_count(), seq.frame_count(), 3).unwrap());
    }

    proptest! {
        #[test]
        fn quantized_weights_are_stable(raw in proptest::collection::vec(1e-6f64..1.0, 1..=6)) {
            let sum: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|x| x / sum).collect();
            let q = quantize_weights(&w);
            let qsum: f64 = q.iter().map(|&x| f64::from(x)).sum();
            let again: Vec<f64> = q.iter().map(|&x| f64::from(x) / qsum).collect();
            prop_assert_eq!(quantize_weights(&again), q);
        }

        #[test]
        fn encode_decode_encode_is_identity(seed in 0u64..40, bones in 1usize..5) {
            let (_, model) = rig_model(bones, seed);
            let first = encode(&model).unwrap();
            prop_assert_eq!(encode(&decode(&first).unwrap()).unwrap(), first);
        }
    }
}
