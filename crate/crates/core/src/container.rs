//! `GGT1` tensor container: float32 arrays with a one-line JSON header.
//!
//! ```text
//! GGT1\n
//! {"dtype":"f32","shape":[...],"layout":"FHWC","byte_order":"LE"}\n
//! <product(shape) * 4 bytes, little-endian, row-major>
//! ```

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"GGT1\n";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub dtype: String,
    pub shape: Vec<usize>,
    pub layout: String,
    pub byte_order: String,
}

impl Header {
    pub fn f32(shape: Vec<usize>, layout: &str) -> Self {
        Self {
            dtype: "f32".into(),
            shape,
            layout: layout.into(),
            byte_order: "LE".into(),
        }
    }

    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }

    fn validate(&self) -> Result<()> {
        if self.dtype != "f32" {
            return Err(Error::Container(format!("unsupported dtype {:?}", self.dtype)));
        }
        if self.byte_order != "LE" {
            return Err(Error::Container(format!(
                "unsupported byte order {:?}",
                self.byte_order
            )));
        }
        if self.layout.chars().count() != self.shape.len() {
            return Err(Error::Container(format!(
                "layout {:?} does not name {} axes",
                self.layout,
                self.shape.len()
            )));
        }
        Ok(())
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("header serializes")
    }
}

/// Dense row-major float32 tensor with named axes.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub layout: String,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, layout: &str, data: Vec<f32>) -> Result<Self> {
        let header = Header::f32(shape.clone(), layout);
        header.validate()?;
        if data.len() != header.element_count() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {} values, got {}",
                header.element_count(),
                data.len()
            )));
        }
        Ok(Self {
            shape,
            layout: layout.into(),
            data,
        })
    }

    pub fn zeros(shape: Vec<usize>, layout: &str) -> Self {
        let n = shape.iter().product();
        Self::new(shape, layout, vec![0.0; n]).expect("consistent zeros")
    }

    pub fn header(&self) -> Header {
        Header::f32(self.shape.clone(), &self.layout)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.data.len() * 4);
        write_to(&mut out, &self.header(), &self.data).expect("writing to memory");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        read_from(&mut &bytes[..])
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        write_to(&mut w, &self.header(), &self.data).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        read_from(&mut std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Container(msg) => Error::Container(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn write_payload<W: Write>(w: &mut W, data: &[f32]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(4 * data.len().min(1 << 16));
    for chunk in data.chunks(1 << 16) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn write_to<W: Write>(w: &mut W, header: &Header, data: &[f32]) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(header.to_line().as_bytes())?;
    w.write_all(b"\n")?;
    write_payload(w, data)
}

/// Streams a container whose payload is appended in pieces.
pub struct ContainerWriter<W: Write> {
    inner: W,
    remaining: usize,
}

impl ContainerWriter<BufWriter<std::fs::File>> {
    pub fn create(path: impl AsRef<Path>, header: Header) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufWriter::new(file), header).map_err(|e| Error::io(path, e))
    }
}

impl<W: Write> ContainerWriter<W> {
    pub fn new(mut inner: W, header: Header) -> std::io::Result<Self> {
        inner.write_all(MAGIC)?;
        inner.write_all(header.to_line().as_bytes())?;
        inner.write_all(b"\n")?;
        Ok(Self {
            inner,
            remaining: header.element_count(),
        })
    }

    pub fn write(&mut self, values: &[f32]) -> Result<()> {
        if values.len() > self.remaining {
            return Err(Error::Container("payload longer than header shape".into()));
        }
        self.remaining -= values.len();
        write_payload(&mut self.inner, values)
            .map_err(|e| Error::Container(format!("write failed: {e}")))
    }

    pub fn finish(mut self) -> Result<W> {
        if self.remaining != 0 {
            return Err(Error::Container(format!(
                "payload short by {} values",
                self.remaining
            )));
        }
        self.inner
            .flush()
            .map_err(|e| Error::Container(format!("flush failed: {e}")))?;
        Ok(self.inner)
    }
}

/// Reads only the header of a container.
pub fn read_header(path: impl AsRef<Path>) -> Result<Header> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = std::io::BufReader::new(file);
    parse_header(&mut r).map_err(|e| match e {
        Error::Container(msg) => Error::Container(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn parse_header<R: Read>(r: &mut R) -> Result<Header> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Container("file shorter than magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Container("bad magic".into()));
    }
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte)
            .map_err(|_| Error::Container("unterminated header".into()))?;
        if byte[0] == b'\n' {
            break;
        }
        line.push(byte[0]);
        if line.len() > 1 << 16 {
            return Err(Error::Container("header too long".into()));
        }
    }
    let header: Header = serde_json::from_slice(&line)
        .map_err(|e| Error::Container(format!("bad header: {e}")))?;
    header.validate()?;
    Ok(header)
}

fn read_from<R: Read>(r: &mut R) -> Result<Tensor> {
    let header = parse_header(r)?;
    let n = header.element_count();
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)
        .map_err(|e| Error::Container(format!("read failed: {e}")))?;
    if payload.len() != n * 4 {
        return Err(Error::Container(format!(
            "payload length {} bytes, header implies {}",
            payload.len(),
            n * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Tensor::new(header.shape, &header.layout, data)
}
