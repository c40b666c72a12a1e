//! Versioned flat-text tensor files.
//!
//! ```text
//! SL3DCKPT v1 <point widths>:<head widths> <K> <seed>
//! tensor <name> <rows> <cols>
//! <cols values>            (rows lines, 17 significant digits)
//! ...
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

const MAGIC: &str = "SL3DCKPT";
const VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, values.len());
        Self { name: name.into(), rows, cols, values }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub widths: String,
    pub classes: usize,
    pub seed: u64,
    pub tensors: Vec<Tensor>,
}

impl TensorFile {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION} {} {} {}\n", self.widths, self.classes, self.seed);
        for t in &self.tensors {
            writeln!(out, "tensor {} {} {}", t.name, t.rows, t.cols).unwrap();
            for row in t.values.chunks(t.cols.max(1)) {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
                writeln!(out, "{}", cells.join(" ")).unwrap();
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let (_, header) = lines.next().ok_or("empty checkpoint")?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        match fields.as_slice() {
            [MAGIC, VERSION, widths, classes, seed] => {
                let classes = classes.parse().map_err(|_| format!("bad K '{classes}'"))?;
                let seed = seed.parse().map_err(|_| format!("bad seed '{seed}'"))?;
                let mut file = TensorFile { widths: widths.to_string(), classes, seed, tensors: Vec::new() };
                while let Some((line, l)) = lines.next() {
                    if l.is_empty() {
                        continue;
                    }
                    let head: Vec<&str> = l.split_whitespace().collect();
                    let (name, rows, cols) = match head.as_slice() {
                        ["tensor", name, rows, cols] => (
                            name.to_string(),
                            rows.parse::<usize>().map_err(|_| format!("line {line}: bad row count"))?,
                            cols.parse::<usize>().map_err(|_| format!("line {line}: bad column count"))?,
                        ),
                        _ => return Err(format!("line {line}: expected 'tensor <name> <rows> <cols>'")),
                    };
                    let mut values = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        let (line, row) = lines.next().ok_or(format!("tensor {name}: truncated"))?;
                        let before = values.len();
                        for tok in row.split_whitespace() {
                            values.push(tok.parse::<f64>().map_err(|_| format!("line {line}: bad value '{tok}'"))?);
                        }
                        if values.len() - before != cols {
                            return Err(format!("line {line}: expected {cols} values"));
                        }
                    }
                    file.tensors.push(Tensor { name, rows, cols, values });
                }
                Ok(file)
            }
            [magic, version, ..] if *magic == MAGIC => Err(format!("unsupported checkpoint version '{version}'")),
            _ => Err(format!("not a {MAGIC} file")),
        }
    }
}

pub fn write_tensor_file(path: &Path, file: &TensorFile) -> io::Result<()> {
    fs::write(path, file.to_text())
}

pub fn read_tensor_file(path: &Path) -> io::Result<TensorFile> {
    let text = fs::read_to_string(path)?;
    TensorFile::parse(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))
}
