//! File formats: shot CSV, dataset sidecar, posterior samples, surfaces,
//! contours, scores and the grid-exchange format.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a file back gives the exact values that were written.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::basis::BasisDocument;
use crate::data::{encode_covariates, filter_shots, Dataset, Encoding, FilterReport, GameRecord, GridSpec, Outcome, ParamVector, RawShot, ShotEvent};
use crate::error::{Error, Result};
use crate::evaluation::GridExchangeRow;
use crate::geometry::{Point, Region};
use crate::sampler::{PosteriorSamples, SamplerConfig};
use crate::summaries::{Flag, SurfaceMap};

pub const SHOT_HEADER: [&str; 6] = ["game_id", "x", "y", "made", "home", "strong"];

/// How malformed shot rows are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowPolicy {
    /// The first bad row is an error.
    #[default]
    Strict,
    /// Bad rows are skipped and reported.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowRejection {
    /// 1-based line number in the file, header is line 1.
    pub line: u64,
    pub reason: String,
}

/// One parsed row. `shot` is `None` for a row that only registers a game.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotRow {
    pub game_id: String,
    pub home: bool,
    pub strong: bool,
    pub shot: Option<(Point, bool)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShotTable {
    pub rows: Vec<ShotRow>,
    pub rejected: Vec<RowRejection>,
}

impl ShotTable {
    pub fn raw_shots(&self) -> Vec<RawShot> {
        self.rows
            .iter()
            .filter_map(|r| {
                r.shot.map(|(s, made)| RawShot {
                    game_id: r.game_id.clone(),
                    x: s.x,
                    y: s.y,
                    made,
                    home: r.home,
                    strong: r.strong,
                })
            })
            .collect()
    }

    /// Builds a dataset, applying the distance filter when `filter` is set.
    /// Games appear in order of first mention, including shotless ones.
    pub fn to_dataset(&self, region: Region, encoding: Encoding, filter: bool) -> Result<Dataset> {
        let mut order: Vec<&ShotRow> = Vec::new();
        for r in &self.rows {
            match order.iter().find(|o| o.game_id == r.game_id) {
                None => order.push(r),
                Some(o) if o.home != r.home || o.strong != r.strong => {
                    if !filter {
                        return Err(Error::Data(format!("game {} has inconsistent covariates", r.game_id)));
                    }
                }
                Some(_) => {}
            }
        }
        let (mut games, report) = if filter {
            let ds = filter_shots(&self.raw_shots(), region, encoding);
            (ds.games, ds.filter)
        } else {
            let mut games: Vec<GameRecord> = Vec::new();
            for r in &self.rows {
                let Some((location, made)) = r.shot else { continue };
                let idx = match games.iter().position(|g| g.game_id == r.game_id) {
                    Some(i) => i,
                    None => {
                        games.push(stub(r, encoding));
                        games.len() - 1
                    }
                };
                games[idx].shots.push(ShotEvent { location, outcome: Outcome::from_flag(made) });
            }
            (games, None)
        };
        let mut ordered = Vec::with_capacity(order.len());
        for o in order {
            match games.iter().position(|g| g.game_id == o.game_id) {
                Some(i) => ordered.push(games.swap_remove(i)),
                None => ordered.push(stub(o, encoding)),
            }
        }
        Dataset::new(ordered, region, encoding, report)
    }
}

fn stub(r: &ShotRow, encoding: Encoding) -> GameRecord {
    GameRecord {
        game_id: r.game_id.clone(),
        home: r.home,
        strong: r.strong,
        z: encode_covariates(r.home, r.strong, encoding),
        shots: Vec::new(),
    }
}

fn parse_flag(field: &str, name: &str) -> std::result::Result<bool, String> {
    match field.trim() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(format!("{name} must be 0 or 1, got '{other}'")),
    }
}

fn parse_coord(field: &str, name: &str) -> std::result::Result<f64, String> {
    let v: f64 = field.trim().parse().map_err(|_| format!("{name} is not a number: '{field}'"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{name} is not finite"))
    }
}

fn parse_shot_record(rec: &csv::StringRecord) -> std::result::Result<ShotRow, String> {
    if rec.len() != SHOT_HEADER.len() {
        return Err(format!("expected {} fields, found {}", SHOT_HEADER.len(), rec.len()));
    }
    let game_id = rec[0].trim().to_string();
    if game_id.is_empty() {
        return Err("empty game_id".into());
    }
    let home = parse_flag(&rec[4], "home")?;
    let strong = parse_flag(&rec[5], "strong")?;
    let shot = if rec[1].trim().is_empty() && rec[2].trim().is_empty() && rec[3].trim().is_empty() {
        None
    } else {
        let p = Point::new(parse_coord(&rec[1], "x")?, parse_coord(&rec[2], "y")?);
        Some((p, parse_flag(&rec[3], "made")?))
    };
    Ok(ShotRow { game_id, home, strong, shot })
}

/// Reads the shot CSV. Rows with empty `x`, `y` and `made` register a game
/// without shots.
pub fn read_shots<R: Read>(reader: R, policy: RowPolicy) -> Result<ShotTable> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != SHOT_HEADER {
        return Err(Error::Input(format!("shot CSV header must be {}, got {}", SHOT_HEADER.join(","), header.join(","))));
    }
    let mut table = ShotTable::default();
    for rec in rdr.records() {
        let (line, parsed) = match rec {
            Ok(rec) => (rec.position().map_or(0, |p| p.line()), parse_shot_record(&rec)),
            Err(e) => (e.position().map_or(0, |p| p.line()), Err(e.to_string())),
        };
        match (parsed, policy) {
            (Ok(row), _) => table.rows.push(row),
            (Err(reason), RowPolicy::Strict) => {
                return Err(Error::Data(format!("line {line}: {reason}")));
            }
            (Err(reason), RowPolicy::Lenient) => table.rejected.push(RowRejection { line, reason }),
        }
    }
    Ok(table)
}

/// Writes a dataset as shot CSV; shotless games get a single empty row.
pub fn write_shots<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SHOT_HEADER)?;
    let flag = |b: bool| if b { "1" } else { "0" };
    for g in &dataset.games {
        if g.shots.is_empty() {
            w.write_record([g.game_id.as_str(), "", "", "", flag(g.home), flag(g.strong)])?;
        }
        for s in &g.shots {
            w.write_record([
                g.game_id.clone(),
                s.location.x.to_string(),
                s.location.y.to_string(),
                flag(s.outcome == Outcome::Made).into(),
                flag(g.home).into(),
                flag(g.strong).into(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Dataset-level metadata written next to a shot CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub region: Region,
    pub encoding: Encoding,
    pub games: usize,
    pub shots_missed: usize,
    pub shots_made: usize,
    pub filter: Option<FilterReport>,
}

impl DatasetSidecar {
    pub fn of(dataset: &Dataset) -> Self {
        Self {
            region: dataset.region,
            encoding: dataset.encoding,
            games: dataset.num_games(),
            shots_missed: dataset.count(Outcome::Missed),
            shots_made: dataset.count(Outcome::Made),
            filter: dataset.filter,
        }
    }
}

/// Provenance recorded alongside every output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
}

/// Metadata sidecar of a samples CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplesMetadata {
    pub provenance: Provenance,
    pub config: SamplerConfig,
    pub basis: BasisDocument,
    pub region: Region,
    pub grid: GridSpec,
    pub encoding: Encoding,
    pub chains: Vec<ChainSummary>,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chain: usize,
    pub draws: usize,
    /// Post-burn-in acceptance per block: theta0, theta_beta0, theta_beta1.
    pub acceptance: [f64; 3],
    pub step_sizes: [f64; 3],
    pub nonfinite_rejections: [usize; 3],
}

impl ChainSummary {
    pub fn of(chain: usize, s: &PosteriorSamples) -> Self {
        Self {
            chain,
            draws: s.len(),
            acceptance: s.acceptance,
            step_sizes: s.step_sizes,
            nonfinite_rejections: s.nonfinite_rejections,
        }
    }
}

pub fn sample_columns(l: usize, p: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["chain", "iter", "sigma0_sq", "sigma_beta_sq"].map(String::from).into();
    cols.extend((0..l).map(|i| format!("theta0_{i}")));
    for j in 0..2 {
        for k in 0..p {
            cols.extend((0..l).map(|i| format!("beta{j}_{k}_{i}")));
        }
    }
    cols
}

/// Writes retained draws of one or more chains, one row per draw.
pub fn write_samples<W: Write>(chains: &[PosteriorSamples], writer: W) -> Result<()> {
    let Some(first) = chains.first() else {
        return Err(Error::Input("no chains to write".into()));
    };
    let (l, p) = (first.l, first.p);
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(sample_columns(l, p))?;
    for (c, chain) in chains.iter().enumerate() {
        if chain.l != l || chain.p != p {
            return Err(Error::Dimension("chains differ in shape".into()));
        }
        let cfg = &chain.config;
        for (k, d) in chain.draws.iter().enumerate() {
            let iter = cfg.burn_in + (k + 1) * cfg.thin;
            let mut row = vec![c.to_string(), iter.to_string(), d.sigma0_sq.to_string(), d.sigma_beta_sq.to_string()];
            row.extend(d.coefficients().iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One draw as read back from a samples CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub chain: usize,
    pub iter: usize,
    pub theta: ParamVector,
}

pub fn read_samples<R: Read>(reader: R, l: usize, p: usize) -> Result<Vec<SampleRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let expected = sample_columns(l, p);
    let header: Vec<&str> = rdr.headers()?.iter().collect();
    if header != expected {
        return Err(Error::Dimension(format!(
            "samples CSV has {} columns, expected {} for L = {l}, p = {p}",
            header.len(),
            expected.len()
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::Input(format!("bad number '{}' in samples CSV", &rec[i])))
        };
        let chain = rec[0].parse().map_err(|_| Error::Input("bad chain index".into()))?;
        let iter = rec[1].parse().map_err(|_| Error::Input("bad iteration".into()))?;
        let coef = (4..rec.len()).map(num).collect::<Result<Vec<_>>>()?;
        let mut theta = ParamVector::from_coefficients(&coef, l, p)?;
        theta.sigma0_sq = num(2)?;
        theta.sigma_beta_sq = num(3)?;
        out.push(SampleRow { chain, iter, theta });
    }
    Ok(out)
}

pub fn write_surface_csv<W: Write>(map: &SurfaceMap, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x", "y", "value", "flag"])?;
    for (h, v) in map.values.iter().enumerate() {
        let c = map.grid.center(h);
        let flag = map.flags.as_ref().map_or(Flag::None, |f| f[h]);
        w.write_record([c.x.to_string(), c.y.to_string(), v.to_string(), flag.symbol().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_surface_json<W: Write>(map: &SurfaceMap, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, map)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourDocument {
    pub level: f64,
    /// Each line is a list of `[x, y]` vertices.
    pub lines: Vec<Vec<[f64; 2]>>,
}

impl ContourDocument {
    pub fn new(level: f64, lines: &[Vec<Point>]) -> Self {
        Self { level, lines: lines.iter().map(|l| l.iter().map(|p| [p.x, p.y]).collect()).collect() }
    }
}

/// One score row. `rmse` is present only when a truth is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub method: String,
    pub seed: u64,
    pub rmse: Option<f64>,
    pub npll: Option<f64>,
}

pub fn write_scores<W: Write>(rows: &[ScoreRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "seed", "rmse", "npll"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for r in rows {
        w.write_record([r.method.clone(), r.seed.to_string(), opt(r.rmse), opt(r.npll)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `x,y,game_id,type,value` rows. `type` is `made`/`missed` or `1`/`0`;
/// an empty `game_id` applies to every game.
pub fn read_grid_exchange<R: Read>(reader: R) -> Result<Vec<GridExchangeRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<&str> = rdr.headers()?.iter().collect();
    if header != ["x", "y", "game_id", "type", "value"] {
        return Err(Error::Input("grid exchange header must be x,y,game_id,type,value".into()));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::Input(format!("grid exchange line {line}: bad {what}"));
        let num = |i: usize, what: &str| rec[i].parse::<f64>().map_err(|_| bad(what));
        let outcome = match &rec[3] {
            "made" | "1" => Outcome::Made,
            "missed" | "0" => Outcome::Missed,
            _ => return Err(bad("type")),
        };
        let game_id = (!rec[2].is_empty()).then(|| rec[2].to_string());
        rows.push(GridExchangeRow { x: num(0, "x")?, y: num(1, "y")?, game_id, outcome, value: num(4, "value")? });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "game_id,x,y,made,home,strong\n\
        a,1.5,2.25,1,1,0\n\
        a,-3,4,0,1,0\n\
        b,,,,0,1\n\
        c,10,30,1,0,0\n";

    #[test]
    fn reads_rows_and_empty_games() {
        let t = read_shots(SAMPLE.as_bytes(), RowPolicy::Strict).unwrap();
        assert_eq!(t.rows.len(), 4);
        assert_eq!(t.raw_shots().len(), 3);
        let ds = t.to_dataset(Region::half_court(), Encoding::Additive, true).unwrap();
        let ids: Vec<_> = ds.games.iter().map(|g| g.game_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(ds.games[1].z, vec![0.0, 1.0]);
        // (10, 30) is beyond 28 ft
        assert_eq!(ds.filter.unwrap().too_far, 1);
        assert!(ds.games[2].shots.is_empty());
    }

    #[test]
    fn strict_and_lenient() {
        let bad = "game_id,x,y,made,home,strong\na,1,2,1,1,0\na,oops,2,1,1,0\na,1,2,2,1,0\nb,1,2\n";
        let err = read_shots(bad.as_bytes(), RowPolicy::Strict).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let t = read_shots(bad.as_bytes(), RowPolicy::Lenient).unwrap();
        assert_eq!(t.rows.len(), 1);
        let lines: Vec<u64> = t.rejected.iter().map(|r| r.line).collect();
        assert_eq!(lines, [3, 4, 5]);
        assert!(read_shots("a,b\n".as_bytes(), RowPolicy::Lenient).is_err());
    }

    #[test]
    fn shot_csv_round_trip_is_exact() {
        let t = read_shots(SAMPLE.as_bytes(), RowPolicy::Strict).unwrap();
        let ds = t.to_dataset(Region::new(-50.0, 50.0, 0.0, 50.0).unwrap(), Encoding::Interaction, false).unwrap();
        let mut buf = Vec::new();
        write_shots(&ds, &mut buf).unwrap();
        let back = read_shots(buf.as_slice(), RowPolicy::Strict)
            .unwrap()
            .to_dataset(ds.region, ds.encoding, false)
            .unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn unfiltered_rejects_outside_points_and_mixed_covariates() {
        let t = read_shots(SAMPLE.as_bytes(), RowPolicy::Strict).unwrap();
        assert!(t.to_dataset(Region::unit_square_centered(), Encoding::Additive, false).is_err());
        let mixed = "game_id,x,y,made,home,strong\na,1,2,1,1,0\na,1,2,1,0,0\n";
        let t = read_shots(mixed.as_bytes(), RowPolicy::Strict).unwrap();
        assert!(t.to_dataset(Region::half_court(), Encoding::Additive, false).is_err());
        let ds = t.to_dataset(Region::half_court(), Encoding::Additive, true).unwrap();
        assert_eq!(ds.filter.unwrap().inconsistent_covariates, 1);
    }

    #[test]
    fn sample_columns_layout() {
        let cols = sample_columns(2, 1);
        assert_eq!(
            cols,
            ["chain", "iter", "sigma0_sq", "sigma_beta_sq", "theta0_0", "theta0_1", "beta0_0_0", "beta0_0_1", "beta1_0_0", "beta1_0_1"]
        );
    }

    #[test]
    fn grid_exchange_parsing() {
        let text = "x,y,game_id,type,value\n0.5,0.5,,made,2\n0.5,0.5,g1,0,3\n";
        let rows = read_grid_exchange(text.as_bytes()).unwrap();
        assert_eq!(rows[0].game_id, None);
        assert_eq!(rows[1].outcome, Outcome::Missed);
        assert!(read_grid_exchange("x,y,game_id,type,value\n0,0,,maybe,1\n".as_bytes()).is_err());
    }
}
