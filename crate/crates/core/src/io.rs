//! Edge-list multigraph files and CSV signals.
//!
//! Edge-list format: the first line is `<N> <m>`; each following non-empty
//! line not starting with `#` is `<class> <src> <dst> <weight>`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{MspError, Result};
use crate::linalg::Matrix;
use crate::multigraph::{Multigraph, MultiFeatureSignal, OperatorKind, ShiftOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    None,
    Spectral,
}

pub fn load_multigraph(path: impl AsRef<Path>, normalization: Normalization) -> Result<Multigraph> {
    let text = fs::read_to_string(path)?;
    parse_multigraph(&text, normalization)
}

fn parse_err(line: usize, message: impl Into<String>) -> MspError {
    MspError::Parse { line, message: message.into() }
}

pub fn parse_multigraph(text: &str, normalization: Normalization) -> Result<Multigraph> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 2 {
        return Err(parse_err(hline, format!("header must be \"<N> <m>\", got {header:?}")));
    }
    let n: usize = fields[0].parse().map_err(|_| parse_err(hline, "node count is not an integer"))?;
    let m: usize = fields[1].parse().map_err(|_| parse_err(hline, "class count is not an integer"))?;
    if n == 0 || m == 0 {
        return Err(parse_err(hline, "node and class counts must be positive"));
    }

    let mut mats = vec![Matrix::zeros(n, n); m];
    for (lineno, line) in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(parse_err(lineno, format!("expected 4 fields, got {}", f.len())));
        }
        let int = |s: &str, what: &str| -> Result<usize> {
            s.parse().map_err(|_| parse_err(lineno, format!("{what} {s:?} is not a nonnegative integer")))
        };
        let class = int(f[0], "class")?;
        let src = int(f[1], "source")?;
        let dst = int(f[2], "destination")?;
        let w: f64 = f[3].parse().map_err(|_| parse_err(lineno, format!("weight {:?} is not a number", f[3])))?;
        if class >= m {
            return Err(parse_err(lineno, format!("class {class} >= {m}")));
        }
        if src >= n || dst >= n {
            return Err(parse_err(lineno, format!("node id out of range [0, {n})")));
        }
        if !w.is_finite() {
            return Err(parse_err(lineno, format!("non-finite weight {w}")));
        }
        mats[class][(dst, src)] += w;
    }

    let ops = mats
        .into_iter()
        .map(|mat| ShiftOperator::with_kind(mat, OperatorKind::Adjacency))
        .collect::<Result<Vec<_>>>()?;
    let mg = Multigraph::new(ops)?;
    Ok(match normalization {
        Normalization::None => mg,
        Normalization::Spectral => mg.spectrally_normalized(),
    })
}

/// Writes every nonzero entry as an edge, ordered by class, source, destination.
pub fn format_multigraph(mg: &Multigraph) -> String {
    let mut out = format!("{} {}\n", mg.n_nodes(), mg.n_classes());
    for (class, op) in mg.operators().iter().enumerate() {
        let s = op.matrix();
        for src in 0..mg.n_nodes() {
            for dst in 0..mg.n_nodes() {
                let w = s[(dst, src)];
                if w != 0.0 {
                    writeln!(out, "{class} {src} {dst} {w:?}").unwrap();
                }
            }
        }
    }
    out
}

pub fn save_multigraph(mg: &Multigraph, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_multigraph(mg))?;
    Ok(())
}

pub fn parse_signal_csv(text: &str) -> Result<MultiFeatureSignal> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| {
                let v = v.trim();
                v.parse::<f64>().map_err(|_| parse_err(i + 1, format!("{v:?} is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(i + 1, format!("expected {} columns, got {}", first.len(), row.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(1, "empty signal file"));
    }
    let (n, f) = (rows.len(), rows[0].len());
    MultiFeatureSignal::new(Matrix::from_fn(n, f, |i, j| rows[i][j]))
}

pub fn load_signal_csv(path: impl AsRef<Path>) -> Result<MultiFeatureSignal> {
    parse_signal_csv(&fs::read_to_string(path)?)
}

pub fn format_signal_csv(x: &MultiFeatureSignal) -> String {
    let mut out = String::new();
    for i in 0..x.n_nodes() {
        let row: Vec<String> = (0..x.n_features()).map(|j| format!("{:?}", x.values[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_norm;

    #[test]
    fn single_edge_file() {
        let mg = parse_multigraph("3 2\n0 0 1 1\n", Normalization::None).unwrap();
        assert_eq!((mg.n_nodes(), mg.n_classes()), (3, 2));
        assert_eq!(mg.operator(0).iter().filter(|v| **v != 0.0).count(), 1);
        assert_eq!(mg.operator(0)[(1, 0)], 1.0);
        assert!(mg.operator(1).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn empty_edge_section() {
        let mg = parse_multigraph("# comment\n4 1\n\n", Normalization::Spectral).unwrap();
        assert_eq!(mg.operator(0), &Matrix::zeros(4, 4));
    }

    #[test]
    fn three_cycle_spectral() {
        let text = "3 1\n0 0 1 1\n0 1 2 1\n0 2 0 1\n";
        let mg = parse_multigraph(text, Normalization::Spectral).unwrap();
        let svd = mg.operator(0).clone().svd(false, false).singular_values.max();
        assert!((svd - 1.0).abs() < 1e-10);
        assert!((spectral_norm(mg.operator(0)) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn errors_name_the_line() {
        let cases = [
            ("3\n", 1),
            ("3 1\n0 0 3 1\n", 2),
            ("3 1\n# c\n0 0 1 1\n1 0 1 1\n", 4),
            ("3 1\n0 0 1 inf\n", 2),
            ("3 1\n0 0 1\n", 2),
            ("x 1\n", 1),
        ];
        for (text, line) in cases {
            match parse_multigraph(text, Normalization::None) {
                Err(MspError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let text = "4 2\n0 0 1 1.5\n0 0 1 0.25\n1 3 2 -2\n1 2 2 0.1\n";
        let mg = parse_multigraph(text, Normalization::None).unwrap();
        let once = format_multigraph(&mg);
        let again = format_multigraph(&parse_multigraph(&once, Normalization::None).unwrap());
        assert_eq!(once, again);
        assert_eq!(parse_multigraph(&once, Normalization::None).unwrap(), mg);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        let mg = parse_multigraph("2 1\n0 1 0 3\n", Normalization::None).unwrap();
        save_multigraph(&mg, &path).unwrap();
        assert_eq!(load_multigraph(&path, Normalization::None).unwrap(), mg);
    }

    #[test]
    fn signal_csv() {
        let x = parse_signal_csv("1,2\n3.5,-4\n").unwrap();
        assert_eq!((x.n_nodes(), x.n_features()), (2, 2));
        assert_eq!(x.values[(1, 0)], 3.5);
        assert_eq!(parse_signal_csv(&format_signal_csv(&x)).unwrap(), x);
        assert!(parse_signal_csv("1,2\n3\n").is_err());
    }
}
