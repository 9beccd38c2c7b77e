//! Trajectory and sample tables on disk.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::Array2;

use sigsel_core::wf::Trajectory;

/// Parses one trajectory table. Without a `replicate` column the file is a
/// single replicate; with one, rows are grouped by its value (sorted
/// numerically) and every replicate must share the same generations.
pub fn parse_trajectories(text: &str, source: &str) -> Result<Vec<Trajectory>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .with_context(|| format!("{source}: cannot read header"))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.first().map(String::as_str) != Some("generation") {
        bail!("{source}: header must start with `generation`, found {:?}", header.first());
    }
    let has_rep = header.last().map(String::as_str) == Some("replicate");
    let loci = header.len() - 1 - usize::from(has_rep);
    if loci == 0 {
        bail!("{source}: header has no locus columns");
    }
    for (k, name) in header[1..=loci].iter().enumerate() {
        if *name != format!("locus_{}", k + 1) {
            bail!(
                "{source}: header column {} is {name:?}, expected \"locus_{}\"",
                k + 2,
                k + 1
            );
        }
    }

    let mut groups: BTreeMap<i64, (Vec<i64>, Vec<f64>)> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.with_context(|| format!("{source}: row {row}: malformed record"))?;
        if record.len() != header.len() {
            bail!(
                "{source}: row {row}: {} fields, header has {}",
                record.len(),
                header.len()
            );
        }
        let generation: i64 = record[0].parse().map_err(|_| {
            anyhow::anyhow!("{source}: row {row}, column generation: {:?} is not an integer", &record[0])
        })?;
        let rep: i64 = if has_rep {
            let cell = &record[loci + 1];
            cell.parse().map_err(|_| {
                anyhow::anyhow!("{source}: row {row}, column replicate: {cell:?} is not an integer")
            })?
        } else {
            0
        };
        let (times, freqs) = groups.entry(rep).or_default();
        if let Some(&last) = times.last() {
            if generation <= last {
                bail!(
                    "{source}: row {row}: generation {generation} does not increase (previous {last})"
                );
            }
        }
        times.push(generation);
        for l in 0..loci {
            let cell = &record[l + 1];
            let v: f64 = cell.parse().map_err(|_| {
                anyhow::anyhow!("{source}: row {row}, column locus_{}: {cell:?} is not a number", l + 1)
            })?;
            if !(0.0..=1.0).contains(&v) {
                bail!(
                    "{source}: row {row}, column locus_{}: frequency {v} outside [0, 1]",
                    l + 1
                );
            }
            freqs.push(v);
        }
    }
    if groups.is_empty() {
        bail!("{source}: no data rows");
    }

    let mut out = Vec::with_capacity(groups.len());
    let mut grid: Option<Vec<i64>> = None;
    for (rep, (times, freqs)) in groups {
        match &grid {
            Some(g) if *g != times => bail!(
                "{source}: replicate {rep} has generations {times:?}, other replicates {g:?}"
            ),
            _ => grid = Some(times.clone()),
        }
        let rows = times.len();
        let traj = Trajectory::new(times, Array2::from_shape_vec((rows, loci), freqs)?)
            .with_context(|| format!("{source}: replicate {rep}"))?;
        out.push(traj);
    }
    Ok(out)
}

pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_trajectories(&text, &path.display().to_string())
}

/// Reads every file; all replicates must share one time grid.
pub fn read_all(paths: &[impl AsRef<Path>]) -> Result<Vec<Trajectory>> {
    if paths.is_empty() {
        bail!("no trajectory files given");
    }
    let mut all: Vec<Trajectory> = Vec::new();
    for p in paths {
        for t in read_trajectories(p.as_ref())? {
            if let Some(first) = all.first() {
                if first.times() != t.times() || first.loci() != t.loci() {
                    bail!(
                        "{}: time grid or locus count differs from the first replicate",
                        p.as_ref().display()
                    );
                }
            }
            all.push(t);
        }
    }
    Ok(all)
}

/// `generation,locus_1..` table; values use the shortest exact decimal form,
/// so reading the file back gives identical numbers.
pub fn format_trajectories(trajs: &[Trajectory]) -> String {
    let loci = trajs.first().map_or(0, Trajectory::loci);
    let with_rep = trajs.len() > 1;
    let mut s = String::from("generation");
    for l in 1..=loci {
        write!(s, ",locus_{l}").unwrap();
    }
    if with_rep {
        s.push_str(",replicate");
    }
    s.push('\n');
    for (r, t) in trajs.iter().enumerate() {
        for (k, g) in t.times().iter().enumerate() {
            write!(s, "{g}").unwrap();
            for v in t.freqs().row(k) {
                write!(s, ",{v}").unwrap();
            }
            if with_rep {
                write!(s, ",{}", r + 1).unwrap();
            }
            s.push('\n');
        }
    }
    s
}

pub fn format_matrix(names: &[String], rows: &Array2<f64>) -> String {
    let mut s = names.join(",");
    s.push('\n');
    for row in rows.rows() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn parse_matrix(text: &str) -> Result<(Vec<String>, Array2<f64>)> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let names: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        for cell in rec.iter() {
            values.push(
                cell.parse::<f64>()
                    .with_context(|| format!("row {}: {cell:?} is not a number", i + 1))?,
            );
        }
        rows += 1;
    }
    Ok((names.clone(), Array2::from_shape_vec((rows, names.len()), values)?))
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}
