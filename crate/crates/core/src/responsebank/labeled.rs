use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ClassId, ResponseBank};
use crate::corpus::{assemble_context, Conversation, ContextConfig, ResponseId, ResponseIndex, ResponseRecord, Speaker};
use crate::error::{Error, Result};

/// A (context, class) training pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LabeledExample {
    pub conversation_id: String,
    /// Index of the doctor turn being predicted.
    pub turn_index: u32,
    pub response_id: ResponseId,
    pub class_id: ClassId,
    pub context: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub examples: Vec<LabeledExample>,
    pub doctor_turns: u64,
    /// Labeled examples over all doctor turns.
    pub labeled_fraction: f64,
}

/// One example per doctor turn whose normalized text belongs to a class.
/// A doctor turn that opens its conversation has no context and is skipped,
/// but still counts toward the denominator of `labeled_fraction`.
pub fn extract_labeled_examples(
    conversations: &[Conversation],
    bank: &ResponseBank,
    records: &[ResponseRecord],
    config: ContextConfig,
) -> Result<Extraction> {
    if bank.is_empty() {
        return Err(Error::Empty("response bank"));
    }
    let index = ResponseIndex::new(records);
    let membership = bank.membership();
    let mut examples = Vec::new();
    let mut doctor_turns = 0u64;
    for conv in conversations {
        for turn in &conv.turns {
            if turn.speaker != Speaker::Doctor {
                continue;
            }
            doctor_turns += 1;
            if turn.index == 0 {
                continue;
            }
            let Some(response_id) = index.get(&turn.normalized) else { continue };
            let Some(&class_id) = membership.get(&response_id) else { continue };
            examples.push(LabeledExample {
                conversation_id: conv.id.clone(),
                turn_index: turn.index as u32,
                response_id,
                class_id,
                context: assemble_context(conv, turn.index, config)?,
            });
        }
    }
    let labeled_fraction = if doctor_turns == 0 {
        0.0
    } else {
        examples.len() as f64 / doctor_turns as f64
    };
    Ok(Extraction {
        examples,
        doctor_turns,
        labeled_fraction,
    })
}

const MAGIC: &[u8; 4] = b"RBEX";
const FORMAT_VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    let len = u32::try_from(s.len()).map_err(|_| std::io::Error::other("string too long"))?;
    put_u32(w, len)?;
    w.write_all(s.as_bytes())
}

/// Binary examples file: `RBEX`, format version, example count, then each
/// example as length-prefixed fields. All integers little-endian.
pub fn write_examples<W: Write>(mut w: W, examples: &[LabeledExample]) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    put_u32(&mut w, FORMAT_VERSION)?;
    w.write_all(&(examples.len() as u64).to_le_bytes())?;
    for ex in examples {
        put_str(&mut w, &ex.conversation_id)?;
        put_u32(&mut w, ex.turn_index)?;
        put_u32(&mut w, ex.response_id)?;
        put_u32(&mut w, ex.class_id)?;
        put_u32(&mut w, ex.context.len() as u32)?;
        for tok in &ex.context {
            put_str(&mut w, tok)?;
        }
    }
    w.flush()
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    name: &'a str,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::validation(format!("{}: truncated at byte {}", self.name, self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let at = self.pos;
        let bytes = self.take(n)?.to_vec();
        String::from_utf8(bytes)
            .map_err(|_| Error::validation(format!("{}: invalid UTF-8 at byte {at}", self.name)))
    }
}

pub fn read_examples<R: Read>(mut r: R, source_name: &str) -> Result<Vec<LabeledExample>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| Error::io(source_name, e))?;
    let mut c = Cursor {
        buf: &buf,
        pos: 0,
        name: source_name,
    };
    if c.take(4)? != MAGIC {
        return Err(Error::validation(format!("{source_name}: not an examples file")));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::validation(format!("{source_name}: unsupported format version {version}")));
    }
    let n = c.u64()?;
    let mut out = Vec::with_capacity(n.min(1 << 20) as usize);
    for _ in 0..n {
        let conversation_id = c.string()?;
        let turn_index = c.u32()?;
        let response_id = c.u32()?;
        let class_id = c.u32()?;
        let len = c.u32()?;
        let context = (0..len).map(|_| c.string()).collect::<Result<Vec<_>>>()?;
        out.push(LabeledExample {
            conversation_id,
            turn_index,
            response_id,
            class_id,
            context,
        });
    }
    if c.pos != buf.len() {
        return Err(Error::validation(format!("{source_name}: trailing bytes after {n} examples")));
    }
    Ok(out)
}

pub fn load_examples(path: &std::path::Path) -> Result<Vec<LabeledExample>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_examples(std::io::BufReader::new(f), &path.display().to_string())
}

pub fn save_examples(path: &std::path::Path, examples: &[LabeledExample]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_examples(std::io::BufWriter::new(f), examples).map_err(|e| Error::io(path, e))
}
