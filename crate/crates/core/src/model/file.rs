//! Binary model file and text exports.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes  "MPEMODEL"
//! version      u32      1
//! dim          u32
//! sizes        4 x u64  objects, slots, current, next
//! flags        u8       bit0 use_object, bit1 use_time,
//!                       bit2 shared_locations, bit3 time context present
//! time         u32 slot_minutes, u32 window_start, u32 window_end, i32 tz_offset
//! vocabularies 4 lists (objects, slots, current, next); per token u32 length + UTF-8
//! matrices     objects, slots, current, next as row-major f64; the current
//!              matrix has zero rows when locations are shared
//! candidates   per current location: u32 count + count x u32 next index
//! popularity   per next location: u64 training frequency
//! ```

use std::io::{Read, Write};
use std::str::FromStr;

use super::bundle::{MpeModel, TimeContext};
use super::store::{ComponentMask, EmbeddingStore, Matrix};
use super::train::{Hyperparams, TrainOptions};
use crate::error::{MpeError, Result};
use crate::trajectory::{CandidateIndex, TimeSlotting, Vocab, Vocabulary};

pub const MODEL_MAGIC: &[u8; 8] = b"MPEMODEL";
pub const MODEL_VERSION: u32 = 1;

const FLAG_OBJECT: u8 = 1;
const FLAG_TIME: u8 = 1 << 1;
const FLAG_SHARED: u8 = 1 << 2;
const FLAG_TIME_CONTEXT: u8 = 1 << 3;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_vocab(buf: &mut Vec<u8>, vocab: &Vocab) {
    for t in vocab.tokens() {
        put_u32(buf, t.len() as u32);
        buf.extend_from_slice(t.as_bytes());
    }
}

fn put_matrix(buf: &mut Vec<u8>, m: &Matrix) {
    for v in m.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn write_model<W: Write>(mut writer: W, model: &MpeModel) -> Result<()> {
    let store = &model.store;
    let mut buf = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    put_u32(&mut buf, MODEL_VERSION);
    put_u32(&mut buf, store.dim as u32);
    for n in [
        model.vocab.objects.len(),
        model.vocab.slots.len(),
        model.vocab.current.len(),
        model.vocab.next.len(),
    ] {
        put_u64(&mut buf, n as u64);
    }
    let mut flags = 0u8;
    if model.mask.use_object {
        flags |= FLAG_OBJECT;
    }
    if model.mask.use_time {
        flags |= FLAG_TIME;
    }
    if store.shared_locations {
        flags |= FLAG_SHARED;
    }
    if model.time.is_some() {
        flags |= FLAG_TIME_CONTEXT;
    }
    buf.push(flags);
    let (s, tz) = match model.time {
        Some(tc) => (
            [
                tc.slotting.slot_minutes,
                tc.slotting.window_start_minute,
                tc.slotting.window_end_minute,
            ],
            tc.tz_offset_minutes,
        ),
        None => ([0; 3], 0),
    };
    for v in s {
        put_u32(&mut buf, v);
    }
    buf.extend_from_slice(&tz.to_le_bytes());
    for v in [
        &model.vocab.objects,
        &model.vocab.slots,
        &model.vocab.current,
        &model.vocab.next,
    ] {
        put_vocab(&mut buf, v);
    }
    for m in [&store.objects, &store.slots, &store.current, &store.next] {
        put_matrix(&mut buf, m);
    }
    for list in model.candidates.lists() {
        put_u32(&mut buf, list.len() as u32);
        for &n in list {
            put_u32(&mut buf, n);
        }
    }
    for &p in &model.next_popularity {
        put_u64(&mut buf, p);
    }
    writer.write_all(&buf)?;
    writer.flush()?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| MpeError::Format(format!("truncated at byte {}", self.pos)))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn size(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| MpeError::Format("size overflows usize".into()))
    }

    fn vocab(&mut self, n: usize) -> Result<Vocab> {
        let mut tokens = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let len = self.u32()? as usize;
            let bytes = self.take(len)?;
            let t = std::str::from_utf8(bytes)
                .map_err(|e| MpeError::Format(format!("token is not UTF-8: {e}")))?;
            tokens.push(t.to_string());
        }
        Vocab::from_tokens(tokens)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| MpeError::Format("matrix size overflows".into()))?;
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| MpeError::Format("matrix size overflows".into()))?,
        )?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Matrix::from_vec(rows, cols, data)
    }
}

pub fn read_model<R: Read>(mut reader: R) -> Result<MpeModel> {
    let mut data = Vec::new();
    reader.read_to_end(&mut data)?;
    let mut c = Cursor {
        data: &data,
        pos: 0,
    };
    if c.take(8)? != MODEL_MAGIC {
        return Err(MpeError::Format("not a model file (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != MODEL_VERSION {
        return Err(MpeError::Format(format!("unsupported version {version}")));
    }
    let dim = c.u32()? as usize;
    let (n_obj, n_slot, n_cur, n_next) = (c.size()?, c.size()?, c.size()?, c.size()?);
    let flags = c.u8()?;
    let shared = flags & FLAG_SHARED != 0;
    let (slot_minutes, start, end, tz) = (c.u32()?, c.u32()?, c.u32()?, c.i32()?);
    let time = if flags & FLAG_TIME_CONTEXT != 0 {
        Some(TimeContext {
            slotting: TimeSlotting::new(slot_minutes, start, end)
                .map_err(|e| MpeError::Format(format!("bad time slotting: {e}")))?,
            tz_offset_minutes: tz,
        })
    } else {
        None
    };
    let objects = c.vocab(n_obj)?;
    let slots = c.vocab(n_slot)?;
    let current = c.vocab(n_cur)?;
    let next = c.vocab(n_next)?;
    if shared && current != next {
        return Err(MpeError::Format(
            "shared-location model with differing vocabularies".into(),
        ));
    }
    let store = EmbeddingStore {
        dim,
        objects: c.matrix(n_obj, dim)?,
        slots: c.matrix(n_slot, dim)?,
        current: c.matrix(if shared { 0 } else { n_cur }, dim)?,
        next: c.matrix(n_next, dim)?,
        shared_locations: shared,
    };
    let mut lists = Vec::with_capacity(n_cur.min(1 << 20));
    for _ in 0..n_cur {
        let k = c.u32()? as usize;
        let mut list = Vec::with_capacity(k.min(1 << 20));
        for _ in 0..k {
            let n = c.u32()?;
            if n as usize >= n_next {
                return Err(MpeError::Format(format!(
                    "candidate index {n} out of range"
                )));
            }
            list.push(n);
        }
        lists.push(list);
    }
    let next_popularity = (0..n_next).map(|_| c.u64()).collect::<Result<Vec<_>>>()?;
    if c.pos != data.len() {
        return Err(MpeError::Format(format!(
            "{} trailing bytes",
            data.len() - c.pos
        )));
    }
    Ok(MpeModel {
        vocab: Vocabulary {
            objects,
            slots,
            current,
            next,
            shared_locations: shared,
        },
        store,
        mask: ComponentMask {
            use_object: flags & FLAG_OBJECT != 0,
            use_time: flags & FLAG_TIME != 0,
        },
        candidates: CandidateIndex::from_lists(lists),
        next_popularity,
        time,
    })
}

/// Plain-text `key = value` record of the training settings.
pub fn write_params_sidecar<W: Write>(
    mut w: W,
    hp: &Hyperparams,
    opts: &TrainOptions,
) -> Result<()> {
    writeln!(w, "format = mpe-params v1")?;
    writeln!(w, "dim = {}", hp.dim)?;
    writeln!(w, "negatives = {}", hp.negatives)?;
    writeln!(w, "learning_rate = {}", hp.learning_rate)?;
    writeln!(w, "regularization = {}", hp.regularization)?;
    writeln!(w, "epochs = {}", hp.epochs)?;
    writeln!(w, "seed = {}", hp.seed)?;
    writeln!(w, "early_stop_rel_tol = {}", hp.early_stop_rel_tol)?;
    writeln!(w, "mask = {}", opts.mask.name())?;
    writeln!(w, "shared_locations = {}", opts.shared_locations)?;
    writeln!(w, "negative_mode = {}", opts.exclusion.name())?;
    writeln!(w, "negative_pool = {}", opts.negative_pool.name())?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingKind {
    Object,
    Time,
    LocCurrent,
    LocNext,
}

impl EmbeddingKind {
    pub const ALL: [EmbeddingKind; 4] = [Self::Object, Self::Time, Self::LocCurrent, Self::LocNext];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Object => "object",
            Self::Time => "time",
            Self::LocCurrent => "loc_current",
            Self::LocNext => "loc_next",
        }
    }
}

impl FromStr for EmbeddingKind {
    type Err = MpeError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| MpeError::Config(format!("unknown embedding kind '{s}'")))
    }
}

/// Headerless TSV rows `kind, token, v_0 .. v_{D-1}` for the requested kinds.
pub fn write_embeddings_tsv<W: Write>(
    mut w: W,
    model: &MpeModel,
    kinds: &[EmbeddingKind],
) -> Result<()> {
    let store = &model.store;
    for &kind in kinds {
        let vocab = match kind {
            EmbeddingKind::Object => &model.vocab.objects,
            EmbeddingKind::Time => &model.vocab.slots,
            EmbeddingKind::LocCurrent => &model.vocab.current,
            EmbeddingKind::LocNext => &model.vocab.next,
        };
        for (i, token) in vocab.tokens().iter().enumerate() {
            let row = match kind {
                EmbeddingKind::Object => store.objects.row(i),
                EmbeddingKind::Time => store.slots.row(i),
                EmbeddingKind::LocCurrent => store.current_row(i),
                EmbeddingKind::LocNext => store.next.row(i),
            };
            write!(w, "{}\t{}", kind.name(), token)?;
            for v in row {
                write!(w, "\t{v}")?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}
