//! Model checkpoints: `XMREID-CCA 1`, `XMREID-XQDA 1` and `XMREID-CNN 1`.
//!
//! Each file is a magic line, a line of sizes, then one line per vector or
//! matrix row, all reals at 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use xmreid_core::cca::CcaModel;
use xmreid_core::linalg::Matrix;
use xmreid_core::textcnn::{TextCnnConfig, TextCnnModel, TextCnnParams};
use xmreid_core::xqda::XqdaModel;

use crate::dataio::{fmt_real, fmt_vector, parse_vector, read_text, write_text, DataError};

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str, magic: &'static str) -> Result<Self, DataError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l == magic => Ok(Self { lines }),
            _ => Err(DataError::MalformedHeader { line: 1, expected: magic }),
        }
    }

    fn line(&mut self) -> Result<(usize, &'a str), DataError> {
        self.lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or(DataError::Malformed { line: 0, msg: "unexpected end of model file".into() })
    }

    fn fields(&mut self, n: usize) -> Result<(usize, Vec<&'a str>), DataError> {
        let (line, l) = self.line()?;
        let f: Vec<&str> = l.split(' ').collect();
        if f.len() != n {
            return Err(DataError::DimensionMismatch { line, expected: n, found: f.len() });
        }
        Ok((line, f))
    }

    fn vector(&mut self, n: usize) -> Result<Vec<f64>, DataError> {
        let (line, l) = self.line()?;
        parse_vector(l, n, line)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix, DataError> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.vector(cols)?);
        }
        Matrix::new(rows, cols, data).map_err(|e| DataError::Malformed { line: 0, msg: e.to_string() })
    }

    fn finish(mut self) -> Result<(), DataError> {
        match self.lines.find(|(_, l)| !l.is_empty()) {
            Some((i, _)) => Err(DataError::Malformed { line: i + 1, msg: "trailing content".into() }),
            None => Ok(()),
        }
    }
}

fn num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T, DataError> {
    tok.parse().map_err(|_| DataError::Malformed { line, msg: format!("cannot parse {tok:?}") })
}

fn push_matrix(s: &mut String, m: &Matrix) {
    for i in 0..m.rows() {
        s.push_str(&fmt_vector(m.row(i)));
        s.push('\n');
    }
}

pub const CCA_MAGIC: &str = "XMREID-CCA 1";
pub const XQDA_MAGIC: &str = "XMREID-XQDA 1";
pub const CNN_MAGIC: &str = "XMREID-CNN 1";

/// `d_x d_y k eps`, then `μ_x`, `μ_y`, `W_x` rows, `W_y` rows, correlations.
pub fn write_cca(m: &CcaModel) -> String {
    let mut s = format!("{CCA_MAGIC}\n{} {} {} {}\n", m.dim_x(), m.dim_y(), m.k(), fmt_real(m.eps));
    for v in [&m.mean_x, &m.mean_y] {
        s.push_str(&fmt_vector(v));
        s.push('\n');
    }
    push_matrix(&mut s, &m.wx);
    push_matrix(&mut s, &m.wy);
    s.push_str(&fmt_vector(&m.correlations));
    s.push('\n');
    s
}

pub fn parse_cca(text: &str) -> Result<CcaModel, DataError> {
    let mut r = Reader::new(text, CCA_MAGIC)?;
    let (line, f) = r.fields(4)?;
    let (dx, dy, k): (usize, usize, usize) = (num(f[0], line)?, num(f[1], line)?, num(f[2], line)?);
    let eps: f64 = num(f[3], line)?;
    let mean_x = r.vector(dx)?;
    let mean_y = r.vector(dy)?;
    let wx = r.matrix(dx, k)?;
    let wy = r.matrix(dy, k)?;
    let correlations = r.vector(k)?;
    r.finish()?;
    Ok(CcaModel { wx, wy, correlations, mean_x, mean_y, eps })
}

/// `d r`, then mean, `W` rows, `M` rows, eigenvalues and the fallback flag.
pub fn write_xqda(m: &XqdaModel) -> String {
    let mut s = format!("{XQDA_MAGIC}\n{} {}\n", m.dim(), m.rank());
    s.push_str(&fmt_vector(&m.mean));
    s.push('\n');
    push_matrix(&mut s, &m.w);
    push_matrix(&mut s, &m.m);
    s.push_str(&fmt_vector(&m.eigenvalues));
    writeln!(s, "\n{}", u8::from(m.fallback)).expect("writing to a String");
    s
}

pub fn parse_xqda(text: &str) -> Result<XqdaModel, DataError> {
    let mut r = Reader::new(text, XQDA_MAGIC)?;
    let (line, f) = r.fields(2)?;
    let (d, rank): (usize, usize) = (num(f[0], line)?, num(f[1], line)?);
    let mean = r.vector(d)?;
    let w = r.matrix(d, rank)?;
    let m = r.matrix(rank, rank)?;
    let eigenvalues = r.vector(rank)?;
    let (line, flag) = r.line()?;
    let fallback = match flag {
        "0" => false,
        "1" => true,
        _ => return Err(DataError::Malformed { line, msg: "fallback flag must be 0 or 1".into() }),
    };
    r.finish()?;
    Ok(XqdaModel { w, m, mean, eigenvalues, fallback })
}

/// `E T C w H K dropout`, then the six parameter tensors in declaration order.
pub fn write_cnn(m: &TextCnnModel) -> String {
    let c = &m.config;
    let mut s = format!(
        "{CNN_MAGIC}\n{} {} {} {} {} {} {}\n",
        c.embedding_dim,
        c.max_len,
        c.channels,
        c.width,
        c.hidden,
        c.classes,
        fmt_real(c.dropout)
    );
    for t in m.params.tensors() {
        s.push_str(&fmt_vector(t));
        s.push('\n');
    }
    s
}

pub fn parse_cnn(text: &str) -> Result<TextCnnModel, DataError> {
    let mut r = Reader::new(text, CNN_MAGIC)?;
    let (line, f) = r.fields(7)?;
    let config = TextCnnConfig {
        embedding_dim: num(f[0], line)?,
        max_len: num(f[1], line)?,
        channels: num(f[2], line)?,
        width: num(f[3], line)?,
        hidden: num(f[4], line)?,
        classes: num(f[5], line)?,
        dropout: num(f[6], line)?,
    };
    config.validate().map_err(|e| DataError::Malformed { line, msg: e.to_string() })?;
    let mut params = TextCnnParams::zeros(&config);
    for t in params.tensors_mut() {
        let n = t.len();
        *t = r.vector(n)?;
    }
    r.finish()?;
    Ok(TextCnnModel { config, params })
}

pub fn save(path: &Path, text: &str) -> Result<(), DataError> {
    write_text(path, text)
}

pub fn load_cca(path: &Path) -> Result<CcaModel, DataError> {
    parse_cca(&read_text(path)?)
}

pub fn load_xqda(path: &Path) -> Result<XqdaModel, DataError> {
    parse_xqda(&read_text(path)?)
}

pub fn load_cnn(path: &Path) -> Result<TextCnnModel, DataError> {
    parse_cnn(&read_text(path)?)
}
