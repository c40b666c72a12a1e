//! ASCII point-cloud formats: XYZ, OFF and PLY.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{norm, Point, PointCloud, PointSetError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Off,
    PlyAscii,
    Xyz,
}

impl CloudFormat {
    /// Format from a file extension (`off`, `ply`, `xyz`/`txt`).
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "off" => Some(Self::Off),
            "ply" => Some(Self::PlyAscii),
            "xyz" | "txt" => Some(Self::Xyz),
            _ => None,
        }
    }
}

impl FromStr for CloudFormat {
    type Err = PointSetError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "off" => Ok(Self::Off),
            "ply" | "ply-ascii" => Ok(Self::PlyAscii),
            "xyz" => Ok(Self::Xyz),
            other => Err(PointSetError::UnsupportedFormat(other.to_string())),
        }
    }
}

/// Read a cloud; the id is the file stem.
pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let display = path.display().to_string();
    let text = fs::read(path).map_err(|source| PointSetError::Io { path: display.clone(), source })?;
    let text = String::from_utf8(text).map_err(|_| {
        PointSetError::UnsupportedFormat(format!("{display}: not UTF-8 text (binary files are not supported)"))
    })?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let parser = Parser { path: &display };
    let cloud = match format {
        CloudFormat::Xyz => parser.xyz(&text)?,
        CloudFormat::Off => parser.off(&text)?,
        CloudFormat::PlyAscii => parser.ply(&text)?,
    };
    Ok(cloud.with_id(id))
}

/// Serialize a cloud in the given format. Coordinates use the shortest
/// representation that parses back to the same `f64`.
pub fn save_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    let text = match format {
        CloudFormat::Xyz => to_xyz(cloud),
        CloudFormat::Off => to_off(cloud),
        CloudFormat::PlyAscii => to_ply(cloud),
    };
    fs::write(path, text).map_err(|source| PointSetError::Io { path: path.display().to_string(), source })
}

pub(crate) fn to_xyz(cloud: &PointCloud) -> String {
    let mut out = String::new();
    for (i, p) in cloud.points().iter().enumerate() {
        write!(out, "{} {} {}", p[0], p[1], p[2]).unwrap();
        if let Some(labels) = cloud.gt_labels() {
            write!(out, " {}", labels[i]).unwrap();
        }
        out.push('\n');
    }
    out
}

fn to_off(cloud: &PointCloud) -> String {
    let mut out = format!("OFF\n{} 0 0\n", cloud.len());
    for p in cloud.points() {
        writeln!(out, "{} {} {}", p[0], p[1], p[2]).unwrap();
    }
    out
}

fn to_ply(cloud: &PointCloud) -> String {
    let mut out = String::from("ply\nformat ascii 1.0\n");
    writeln!(out, "element vertex {}", cloud.len()).unwrap();
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.normals().is_some() {
        out.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    if cloud.gt_labels().is_some() {
        out.push_str("property uint label\n");
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.points().iter().enumerate() {
        write!(out, "{} {} {}", p[0], p[1], p[2]).unwrap();
        if let Some(n) = cloud.normals() {
            write!(out, " {} {} {}", n[i][0], n[i][1], n[i][2]).unwrap();
        }
        if let Some(l) = cloud.gt_labels() {
            write!(out, " {}", l[i]).unwrap();
        }
        out.push('\n');
    }
    out
}

struct Parser<'a> {
    path: &'a str,
}

impl Parser<'_> {
    fn err(&self, line: usize, message: impl Into<String>) -> PointSetError {
        PointSetError::Parse { path: self.path.to_string(), line, message: message.into() }
    }

    fn float(&self, line: usize, tok: &str) -> Result<f64> {
        let v: f64 = tok.parse().map_err(|_| self.err(line, format!("invalid number '{tok}'")))?;
        if !v.is_finite() {
            return Err(self.err(line, format!("non-finite value '{tok}'")));
        }
        Ok(v)
    }

    fn label(&self, line: usize, tok: &str) -> Result<u32> {
        if let Ok(v) = tok.parse::<u32>() {
            return Ok(v);
        }
        let v = self.float(line, tok)?;
        if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
            return Err(self.err(line, format!("invalid label '{tok}'")));
        }
        Ok(v as u32)
    }

    fn finish(
        &self,
        points: Vec<Point>,
        normals: Option<Vec<Point>>,
        labels: Option<Vec<u32>>,
    ) -> Result<PointCloud> {
        let mut cloud = PointCloud::new("", points)?;
        if let Some(normals) = normals {
            cloud = cloud.with_normals(normals)?;
        }
        if let Some(labels) = labels {
            cloud = cloud.with_labels(labels)?;
        }
        Ok(cloud)
    }

    fn xyz(&self, text: &str) -> Result<PointCloud> {
        let mut points = Vec::new();
        let mut labels: Vec<u32> = Vec::new();
        let mut labeled: Option<bool> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let toks: Vec<&str> = content.split_whitespace().collect();
            let has_label = match toks.len() {
                3 => false,
                4 => true,
                n => return Err(self.err(line, format!("expected 3 or 4 columns, found {n}"))),
            };
            if *labeled.get_or_insert(has_label) != has_label {
                return Err(self.err(line, "inconsistent column count"));
            }
            points.push([self.float(line, toks[0])?, self.float(line, toks[1])?, self.float(line, toks[2])?]);
            if has_label {
                labels.push(self.label(line, toks[3])?);
            }
        }
        self.finish(points, None, (labeled == Some(true)).then_some(labels))
    }

    fn off(&self, text: &str) -> Result<PointCloud> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (line, header) = lines.next().ok_or_else(|| self.err(1, "missing OFF header"))?;
        let rest = header
            .strip_prefix("OFF")
            .ok_or_else(|| self.err(line, "missing OFF header"))?
            .trim();
        let (line, counts) = if rest.is_empty() {
            lines.next().ok_or_else(|| self.err(line, "missing vertex/face counts"))?
        } else {
            (line, rest)
        };
        let counts: Vec<&str> = counts.split_whitespace().collect();
        if counts.len() < 2 {
            return Err(self.err(line, "expected '<vertices> <faces> [edges]'"));
        }
        let nv: usize = counts[0].parse().map_err(|_| self.err(line, "invalid vertex count"))?;
        let nf: usize = counts[1].parse().map_err(|_| self.err(line, "invalid face count"))?;
        let mut points = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (line, l) = lines.next().ok_or_else(|| self.err(line, "unexpected end of vertex list"))?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() < 3 {
                return Err(self.err(line, "vertex needs 3 coordinates"));
            }
            points.push([self.float(line, toks[0])?, self.float(line, toks[1])?, self.float(line, toks[2])?]);
        }
        let mut non_triangles = 0usize;
        for (line, l) in lines.take(nf) {
            match l.split_whitespace().next().map(str::parse::<usize>) {
                Some(Ok(3)) => {}
                Some(Ok(_)) => non_triangles += 1,
                _ => return Err(self.err(line, "invalid face line")),
            }
        }
        if non_triangles > 0 {
            log::warn!("{}: ignoring {non_triangles} non-triangle faces", self.path);
        }
        self.finish(points, None, None)
    }

    fn ply(&self, text: &str) -> Result<PointCloud> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        match lines.next() {
            Some((_, "ply")) => {}
            _ => return Err(self.err(1, "missing 'ply' magic")),
        }
        // (name, count, property names, has list property)
        let mut elements: Vec<(String, usize, Vec<String>, bool)> = Vec::new();
        let mut header_end = 0;
        for (line, l) in lines.by_ref() {
            let toks: Vec<&str> = l.split_whitespace().collect();
            match toks.as_slice() {
                ["format", "ascii", _] => {}
                ["format", other, ..] => {
                    return Err(PointSetError::UnsupportedFormat(format!("{}: PLY format '{other}'", self.path)))
                }
                ["comment", ..] | ["obj_info", ..] | [] => {}
                ["element", name, count] => {
                    let count = count.parse().map_err(|_| self.err(line, "invalid element count"))?;
                    elements.push((name.to_string(), count, Vec::new(), false));
                }
                ["property", "list", ..] => {
                    let el = elements.last_mut().ok_or_else(|| self.err(line, "property before element"))?;
                    el.3 = true;
                }
                ["property", _ty, name] => {
                    let el = elements.last_mut().ok_or_else(|| self.err(line, "property before element"))?;
                    el.2.push(name.to_string());
                }
                ["end_header"] => {
                    header_end = line;
                    break;
                }
                _ => return Err(self.err(line, format!("unrecognized header line '{l}'"))),
            }
        }
        if header_end == 0 {
            return Err(self.err(1, "missing end_header"));
        }
        let mut points = Vec::new();
        let mut normals = None;
        let mut labels = None;
        let mut body = lines.filter(|(_, l)| !l.is_empty());
        for (name, count, props, has_list) in &elements {
            if name != "vertex" {
                for _ in 0..*count {
                    body.next().ok_or_else(|| self.err(header_end, format!("truncated element '{name}'")))?;
                }
                continue;
            }
            if *has_list {
                return Err(PointSetError::UnsupportedFormat(format!(
                    "{}: list property on vertex element",
                    self.path
                )));
            }
            let col = |n: &str| props.iter().position(|p| p == n);
            let (x, y, z) = match (col("x"), col("y"), col("z")) {
                (Some(x), Some(y), Some(z)) => (x, y, z),
                _ => return Err(self.err(header_end, "vertex element needs x, y, z")),
            };
            let normal_cols = match (col("nx"), col("ny"), col("nz")) {
                (Some(a), Some(b), Some(c)) => Some([a, b, c]),
                _ => None,
            };
            let label_col = col("label");
            let mut ns = Vec::new();
            let mut ls = Vec::new();
            for _ in 0..*count {
                let (line, l) = body
                    .next()
                    .ok_or_else(|| self.err(header_end, "unexpected end of vertex data"))?;
                let toks: Vec<&str> = l.split_whitespace().collect();
                if toks.len() != props.len() {
                    return Err(self.err(line, format!("expected {} values, found {}", props.len(), toks.len())));
                }
                points.push([self.float(line, toks[x])?, self.float(line, toks[y])?, self.float(line, toks[z])?]);
                if let Some([a, b, c]) = normal_cols {
                    let n = [self.float(line, toks[a])?, self.float(line, toks[b])?, self.float(line, toks[c])?];
                    ns.push(unitize(n).ok_or_else(|| self.err(line, "zero-length normal"))?);
                }
                if let Some(lc) = label_col {
                    ls.push(self.label(line, toks[lc])?);
                }
            }
            normals = normal_cols.map(|_| ns);
            labels = label_col.map(|_| ls);
        }
        self.finish(points, normals, labels)
    }
}

/// Rescale normals that drifted off unit length (e.g. stored as float32);
/// already-unit vectors are kept bit for bit.
fn unitize(n: Point) -> Option<Point> {
    let len = norm(&n);
    if !(len > 0.0) {
        return None;
    }
    if (len - 1.0).abs() <= 1e-6 {
        Some(n)
    } else {
        Some([n[0] / len, n[1] / len, n[2] / len])
    }
}
