//! The CEMB token-embedding stream: per-sentence, per-token contextual
//! vectors with presence flags.
//!
//! Layout (little-endian):
//!
//! ```text
//! "CEMB" | u32 version=1 | u32 dim | u32 sentence_count
//! per sentence: u32 token_count
//!   per token: u16 byte_len | utf-8 bytes | u8 present (0/1) | [f32; dim] if present
//! ```

use std::fs;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CEMB";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TokenRecord {
    pub token: String,
    /// Present iff the token has a contextual vector.
    pub vector: Option<Vec<f32>>,
}

impl TokenRecord {
    pub fn present(token: impl Into<String>, vector: Vec<f32>) -> Self {
        Self {
            token: token.into(),
            vector: Some(vector),
        }
    }

    pub fn absent(token: impl Into<String>) -> Self {
        Self {
            token: token.into(),
            vector: None,
        }
    }

    pub fn is_present(&self) -> bool {
        self.vector.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddingStream {
    pub dim: usize,
    pub sentences: Vec<Vec<TokenRecord>>,
}

impl TokenEmbeddingStream {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            sentences: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Checks that every present vector has length `dim`.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument("stream dimension must be positive".into()));
        }
        for sent in &self.sentences {
            for rec in sent {
                if let Some(v) = &rec.vector {
                    if v.len() != self.dim {
                        return Err(Error::Dimension {
                            expected: self.dim,
                            got: v.len(),
                        });
                    }
                }
                if rec.token.len() > u16::MAX as usize {
                    return Err(Error::InvalidArgument(format!(
                        "token longer than {} bytes",
                        u16::MAX
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Checks the stream against the (already truncated) corpus side it was
/// extracted from: equal sentence counts and identical tokens. A stream
/// sentence may run longer only where the corpus sentence was cut at
/// `max_len`; such sentences are truncated to match.
pub fn match_corpus<'a>(
    stream: &mut TokenEmbeddingStream,
    corpus: impl ExactSizeIterator<Item = &'a [String]>,
    max_len: usize,
) -> Result<()> {
    if stream.len() != corpus.len() {
        return Err(Error::Misaligned(format!(
            "stream has {} sentences, corpus has {}",
            stream.len(),
            corpus.len()
        )));
    }
    for (i, (sent, tokens)) in stream.sentences.iter_mut().zip(corpus).enumerate() {
        let longer = sent.len() > tokens.len() && tokens.len() == max_len;
        if sent.len() != tokens.len() && !longer {
            return Err(Error::Misaligned(format!(
                "sentence {i}: stream has {} tokens, corpus has {}",
                sent.len(),
                tokens.len()
            )));
        }
        sent.truncate(tokens.len());
        if let Some(j) = sent.iter().zip(tokens).position(|(r, t)| &r.token != t) {
            return Err(Error::Misaligned(format!(
                "sentence {i} token {j}: stream has {:?}, corpus has {:?}",
                sent[j].token, tokens[j]
            )));
        }
    }
    Ok(())
}

/// Incremental reader; yields one sentence at a time.
pub struct StreamReader<R> {
    inner: R,
    offset: u64,
    dim: usize,
    remaining: u32,
}

impl<R: Read> StreamReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut offset = 0u64;
        let mut magic = [0u8; 4];
        read_exact(&mut inner, &mut magic, &mut offset, "magic")?;
        if &magic != MAGIC {
            return Err(Error::InvalidArgument(format!(
                "bad magic {magic:?}, expected \"CEMB\""
            )));
        }
        let version = read_u32(&mut inner, &mut offset, "version")?;
        if version != VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported CEMB version {version} (expected {VERSION})"
            )));
        }
        let dim = read_u32(&mut inner, &mut offset, "dim")? as usize;
        if dim == 0 {
            return Err(Error::InvalidArgument("CEMB dim must be positive".into()));
        }
        let remaining = read_u32(&mut inner, &mut offset, "sentence count")?;
        Ok(Self {
            inner,
            offset,
            dim,
            remaining,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn remaining(&self) -> usize {
        self.remaining as usize
    }

    pub fn next_sentence(&mut self) -> Result<Option<Vec<TokenRecord>>> {
        if self.remaining == 0 {
            return Ok(None);
        }
        self.remaining -= 1;
        let r = &mut self.inner;
        let off = &mut self.offset;
        let count = read_u32(r, off, "token count")? as usize;
        let mut out = Vec::with_capacity(count);
        let mut fbuf = vec![0u8; self.dim * 4];
        for _ in 0..count {
            let len = read_u16(r, off, "token length")? as usize;
            let mut bytes = vec![0u8; len];
            read_exact(r, &mut bytes, off, "token bytes")?;
            let start = *off - len as u64;
            let token = String::from_utf8(bytes).map_err(|_| Error::Truncated {
                offset: start,
                message: "token is not valid UTF-8".into(),
            })?;
            let mut flag = [0u8; 1];
            read_exact(r, &mut flag, off, "presence flag")?;
            let vector = match flag[0] {
                0 => None,
                1 => {
                    read_exact(r, &mut fbuf, off, "vector")?;
                    Some(
                        fbuf.chunks_exact(4)
                            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                            .collect(),
                    )
                }
                other => {
                    return Err(Error::Truncated {
                        offset: *off - 1,
                        message: format!("invalid presence flag {other}"),
                    })
                }
            };
            out.push(TokenRecord { token, vector });
        }
        Ok(Some(out))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], offset: &mut u64, what: &str) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(Error::Truncated {
                    offset: *offset + filled as u64,
                    message: format!("unexpected end of file while reading {what}"),
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => {
                return Err(Error::Truncated {
                    offset: *offset + filled as u64,
                    message: e.to_string(),
                })
            }
        }
    }
    *offset += buf.len() as u64;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R, offset: &mut u64, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, offset, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u16<R: Read>(r: &mut R, offset: &mut u64, what: &str) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b, offset, what)?;
    Ok(u16::from_le_bytes(b))
}

/// Reads a whole CEMB file into memory.
pub fn read_token_stream(path: impl AsRef<Path>) -> Result<TokenEmbeddingStream> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = StreamReader::new(BufReader::new(file))?;
    let mut stream = TokenEmbeddingStream::new(reader.dim());
    stream.sentences.reserve(reader.remaining());
    while let Some(s) = reader.next_sentence()? {
        stream.sentences.push(s);
    }
    Ok(stream)
}

/// Serializes a stream to any writer.
pub fn encode_token_stream<W: Write>(stream: &TokenEmbeddingStream, mut w: W) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(stream.dim as u32).to_le_bytes())?;
    w.write_all(&(stream.sentences.len() as u32).to_le_bytes())?;
    for sent in &stream.sentences {
        w.write_all(&(sent.len() as u32).to_le_bytes())?;
        for rec in sent {
            w.write_all(&(rec.token.len() as u16).to_le_bytes())?;
            w.write_all(rec.token.as_bytes())?;
            match &rec.vector {
                None => w.write_all(&[0])?,
                Some(v) => {
                    w.write_all(&[1])?;
                    for x in v {
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
            }
        }
    }
    w.flush()
}

pub fn write_token_stream(stream: &TokenEmbeddingStream, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    stream.validate()?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    encode_token_stream(stream, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}
