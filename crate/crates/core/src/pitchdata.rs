//! Pitch records, the average rule-book zone, frameable-pitch filtering and
//! boundary regions.
//!
//! Coordinates are in feet from the umpire's perspective: `x` is horizontal
//! (negative toward a right-handed batter), `z` is height above the ground.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half the width of home plate (8.5 in).
pub const PLATE_HALF_WIDTH_FT: f64 = 8.5 / 12.0;
/// Radius of a baseball (1.45 in).
pub const BALL_RADIUS_FT: f64 = 1.45 / 12.0;
/// Pitches farther than this from the average zone are not frameable.
pub const FRAMEABLE_REACH_FT: f64 = 1.0;

pub const PITCH_COLUMNS: [&str; 18] = [
    "pitch_id",
    "season",
    "half_inning_id",
    "umpire_id",
    "batter_id",
    "catcher_id",
    "pitcher_id",
    "batter_hand",
    "pitcher_hand",
    "balls",
    "strikes",
    "x",
    "z",
    "sz_top",
    "sz_bot",
    "taken",
    "call",
    "runs_rest_of_inning",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hand {
    L,
    R,
}

impl FromStr for Hand {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "L" => Ok(Hand::L),
            "R" => Ok(Hand::R),
            other => Err(format!("hand must be L or R, got `{other}`")),
        }
    }
}

impl fmt::Display for Hand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hand::L => "L",
            Hand::R => "R",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Call {
    Ball,
    Strike,
}

impl Call {
    pub fn is_strike(self) -> bool {
        self == Call::Strike
    }
}

impl fmt::Display for Call {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Call::Ball => "ball",
            Call::Strike => "strike",
        })
    }
}

/// A ball-strike count; one of exactly twelve values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "CountRepr", into = "CountRepr")]
pub struct Count {
    balls: u8,
    strikes: u8,
}

#[derive(Serialize, Deserialize)]
struct CountRepr {
    balls: u8,
    strikes: u8,
}

impl TryFrom<CountRepr> for Count {
    type Error = Error;
    fn try_from(r: CountRepr) -> Result<Self> {
        Count::new(r.balls as i64, r.strikes as i64)
    }
}

impl From<Count> for CountRepr {
    fn from(c: Count) -> Self {
        CountRepr {
            balls: c.balls,
            strikes: c.strikes,
        }
    }
}

impl Count {
    pub const ZERO: Count = Count { balls: 0, strikes: 0 };

    pub fn new(balls: i64, strikes: i64) -> Result<Self> {
        if !(0..=3).contains(&balls) || !(0..=2).contains(&strikes) {
            return Err(Error::InvalidCount { balls, strikes });
        }
        Ok(Count {
            balls: balls as u8,
            strikes: strikes as u8,
        })
    }

    pub fn balls(self) -> u8 {
        self.balls
    }

    pub fn strikes(self) -> u8 {
        self.strikes
    }

    /// Position in `Count::all()`: balls-major.
    pub fn index(self) -> usize {
        self.balls as usize * 3 + self.strikes as usize
    }

    pub fn from_index(i: usize) -> Count {
        assert!(i < 12, "count index out of range");
        Count {
            balls: (i / 3) as u8,
            strikes: (i % 3) as u8,
        }
    }

    pub fn all() -> impl Iterator<Item = Count> {
        (0..12).map(Count::from_index)
    }
}

impl fmt::Display for Count {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.balls, self.strikes)
    }
}

impl FromStr for Count {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (b, st) = s
            .split_once('-')
            .ok_or_else(|| Error::InvalidInput(format!("count `{s}` is not of the form B-S")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<i64>()
                .map_err(|_| Error::InvalidInput(format!("count `{s}` is not of the form B-S")))
        };
        Count::new(parse(b)?, parse(st)?)
    }
}

/// One pitch. `call` is present exactly when the pitch was taken.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PitchRecord {
    pub pitch_id: String,
    pub season: i32,
    pub half_inning_id: String,
    pub umpire_id: String,
    pub batter_id: String,
    pub catcher_id: String,
    pub pitcher_id: String,
    pub batter_hand: Hand,
    pub pitcher_hand: Hand,
    pub count: Count,
    pub x: f64,
    pub z: f64,
    pub sz_top: f64,
    pub sz_bot: f64,
    pub taken: bool,
    pub call: Option<Call>,
    pub runs_rest_of_inning: u32,
}

impl PitchRecord {
    pub fn is_called_strike(&self) -> bool {
        self.call == Some(Call::Strike)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.sz_top > self.sz_bot && self.sz_bot > 0.0) {
            return Err(format!(
                "strike zone bounds must satisfy sz_top > sz_bot > 0 (got {} / {})",
                self.sz_top, self.sz_bot
            ));
        }
        if self.taken != self.call.is_some() {
            return Err("call must be present exactly when the pitch is taken".into());
        }
        if !self.x.is_finite() || !self.z.is_finite() {
            return Err("location must be finite".into());
        }
        Ok(())
    }
}

/// A validation failure on one data row (1-based, header excluded).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    pub row: usize,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}: {}", self.row, self.message)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct LoadedPitches {
    pub records: Vec<PitchRecord>,
    pub rejected: Vec<RowError>,
    pub total_rows: usize,
}

pub fn load_pitches(path: impl AsRef<Path>, season_filter: Option<i32>) -> Result<LoadedPitches> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_pitches(file, season_filter)
}

/// Parses the pitch CSV schema. Invalid rows are reported in `rejected`;
/// more than 1% invalid rows is fatal.
pub fn read_pitches<R: Read>(reader: R, season_filter: Option<i32>) -> Result<LoadedPitches> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut cols = [0usize; 18];
    for (slot, name) in cols.iter_mut().zip(PITCH_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }

    let mut out = LoadedPitches::default();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        out.total_rows += 1;
        let parsed = rec.map_err(|e| e.to_string()).and_then(|rec| parse_row(&rec, &cols));
        match parsed {
            Ok(p) => {
                if season_filter.is_none_or(|s| s == p.season) {
                    out.records.push(p);
                }
            }
            Err(message) => out.rejected.push(RowError { row, message }),
        }
    }

    // more than 1% of rows failing is fatal
    if out.rejected.len() * 100 > out.total_rows {
        return Err(Error::TooManyInvalidRows {
            failed: out.rejected.len(),
            total: out.total_rows,
            first: out.rejected[0].clone(),
            errors: out.rejected,
        });
    }
    Ok(out)
}

fn parse_row(rec: &csv::StringRecord, cols: &[usize; 18]) -> std::result::Result<PitchRecord, String> {
    let field = |k: usize| -> std::result::Result<&str, String> {
        rec.get(cols[k])
            .ok_or_else(|| format!("missing value for `{}`", PITCH_COLUMNS[k]))
    };
    fn num<T: FromStr>(s: &str, name: &str) -> std::result::Result<T, String> {
        s.parse::<T>().map_err(|_| format!("unparseable {name} `{s}`"))
    }
    let balls: i64 = num(field(9)?, "balls")?;
    let strikes: i64 = num(field(10)?, "strikes")?;
    let count = Count::new(balls, strikes).map_err(|e| e.to_string())?;
    let taken = match field(15)? {
        "1" | "true" | "TRUE" => true,
        "0" | "false" | "FALSE" => false,
        other => return Err(format!("unparseable taken `{other}`")),
    };
    let call = match field(16)? {
        "B" => Some(Call::Ball),
        "S" => Some(Call::Strike),
        "NA" | "" => None,
        other => return Err(format!("unparseable call `{other}`")),
    };
    let p = PitchRecord {
        pitch_id: field(0)?.to_string(),
        season: num(field(1)?, "season")?,
        half_inning_id: field(2)?.to_string(),
        umpire_id: field(3)?.to_string(),
        batter_id: field(4)?.to_string(),
        catcher_id: field(5)?.to_string(),
        pitcher_id: field(6)?.to_string(),
        batter_hand: field(7)?.parse()?,
        pitcher_hand: field(8)?.parse()?,
        count,
        x: num(field(11)?, "x")?,
        z: num(field(12)?, "z")?,
        sz_top: num(field(13)?, "sz_top")?,
        sz_bot: num(field(14)?, "sz_bot")?,
        taken,
        call,
        runs_rest_of_inning: num(field(17)?, "runs_rest_of_inning")?,
    };
    p.validate()?;
    Ok(p)
}

pub fn write_pitches<W: Write>(writer: W, pitches: &[PitchRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PITCH_COLUMNS)?;
    for p in pitches {
        let call = match p.call {
            Some(Call::Ball) => "B",
            Some(Call::Strike) => "S",
            None => "NA",
        };
        w.write_record([
            p.pitch_id.clone(),
            p.season.to_string(),
            p.half_inning_id.clone(),
            p.umpire_id.clone(),
            p.batter_id.clone(),
            p.catcher_id.clone(),
            p.pitcher_id.clone(),
            p.batter_hand.to_string(),
            p.pitcher_hand.to_string(),
            p.count.balls().to_string(),
            p.count.strikes().to_string(),
            p.x.to_string(),
            p.z.to_string(),
            p.sz_top.to_string(),
            p.sz_bot.to_string(),
            if p.taken { "1" } else { "0" }.to_string(),
            call.to_string(),
            p.runs_rest_of_inning.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<pitch writer>", e))?;
    Ok(())
}

pub fn save_pitches(path: impl AsRef<Path>, pitches: &[PitchRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_pitches(std::io::BufWriter::new(file), pitches)
}

/// The rule-book rectangle: `|x| <= half_width`, `bottom <= z <= top`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrikeZone {
    pub half_width: f64,
    pub top: f64,
    pub bottom: f64,
    pub ball_radius: f64,
}

impl StrikeZone {
    pub fn new(top: f64, bottom: f64) -> Result<Self> {
        let zone = StrikeZone {
            half_width: PLATE_HALF_WIDTH_FT,
            top,
            bottom,
            ball_radius: BALL_RADIUS_FT,
        };
        zone.validate()?;
        Ok(zone)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.top > self.bottom && self.half_width > 0.0 && self.ball_radius > 0.0) {
            return Err(Error::InvalidInput(format!("invalid strike zone {self:?}")));
        }
        Ok(())
    }

    /// Axis-aligned box of all points within `reach` of the zone, padded by `margin`.
    pub fn reach_box(&self, reach: f64, margin: f64) -> BoundingBox {
        let pad = reach + margin;
        BoundingBox {
            x_min: -self.half_width - pad,
            x_max: self.half_width + pad,
            z_min: self.bottom - pad,
            z_max: self.top + pad,
        }
    }
}

pub fn average_zone(pitches: &[PitchRecord]) -> Result<StrikeZone> {
    if pitches.is_empty() {
        return Err(Error::Empty("average zone needs at least one pitch".into()));
    }
    let n = pitches.len() as f64;
    let top = pitches.iter().map(|p| p.sz_top).sum::<f64>() / n;
    let bottom = pitches.iter().map(|p| p.sz_bot).sum::<f64>() / n;
    StrikeZone::new(top, bottom)
}

/// Signed Euclidean distance to the zone's perimeter: negative strictly
/// inside, zero on the boundary, positive outside.
pub fn zone_distance(x: f64, z: f64, zone: &StrikeZone) -> f64 {
    let left = -zone.half_width;
    let right = zone.half_width;
    let dx = (left - x).max(x - right);
    let dz = (zone.bottom - z).max(z - zone.top);
    if dx <= 0.0 && dz <= 0.0 {
        // inside or on the boundary: distance to the nearest edge
        dx.max(dz)
    } else {
        let ox = dx.max(0.0);
        let oz = dz.max(0.0);
        (ox * ox + oz * oz).sqrt()
    }
}

/// Taken pitches within one foot of the zone.
pub fn filter_frameable(pitches: &[PitchRecord], zone: &StrikeZone) -> Vec<PitchRecord> {
    pitches
        .iter()
        .filter(|p| p.taken && zone_distance(p.x, p.z, zone) <= FRAMEABLE_REACH_FT)
        .cloned()
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    InsideZone,
    /// Within one ball radius of the boundary, either side.
    Region1,
    /// One to two ball radii outside the boundary.
    Region2,
    Outside,
}

pub fn classify_region(x: f64, z: f64, zone: &StrikeZone) -> Region {
    let d = zone_distance(x, z, zone);
    let r = zone.ball_radius;
    if d.abs() <= r {
        Region::Region1
    } else if d > r && d <= 2.0 * r {
        Region::Region2
    } else if d < -r {
        Region::InsideZone
    } else {
        Region::Outside
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl BoundingBox {
    pub fn contains(&self, x: f64, z: f64) -> bool {
        x >= self.x_min && x <= self.x_max && z >= self.z_min && z <= self.z_max
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatCell {
    pub x_center: f64,
    pub z_center: f64,
    pub n: usize,
    pub strikes: usize,
    /// `None` when the cell is empty.
    pub strike_rate: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Heatmap {
    pub cell_size_ft: f64,
    pub nx: usize,
    pub nz: usize,
    /// Row-major in `z`, then `x`.
    pub cells: Vec<HeatCell>,
    /// Taken pitches falling outside the bounding box.
    pub outside: usize,
    /// Pitches that were not taken and so carry no call.
    pub untaken: usize,
}

/// Square-cell tally of taken pitches and called-strike proportions.
pub fn empirical_heatmap(pitches: &[PitchRecord], cell_size_in: f64, bbox: &BoundingBox) -> Result<Heatmap> {
    if !(cell_size_in > 0.0) {
        return Err(Error::InvalidInput("cell size must be positive".into()));
    }
    if !(bbox.x_max > bbox.x_min && bbox.z_max > bbox.z_min) {
        return Err(Error::InvalidInput("empty bounding box".into()));
    }
    let cell = cell_size_in / 12.0;
    let nx = ((bbox.x_max - bbox.x_min) / cell - 1e-9).ceil().max(1.0) as usize;
    let nz = ((bbox.z_max - bbox.z_min) / cell - 1e-9).ceil().max(1.0) as usize;
    let mut n = vec![0usize; nx * nz];
    let mut s = vec![0usize; nx * nz];
    let mut outside = 0;
    let mut untaken = 0;
    for p in pitches {
        if !p.taken {
            untaken += 1;
            continue;
        }
        if !bbox.contains(p.x, p.z) {
            outside += 1;
            continue;
        }
        let i = (((p.x - bbox.x_min) / cell) as usize).min(nx - 1);
        let j = (((p.z - bbox.z_min) / cell) as usize).min(nz - 1);
        n[j * nx + i] += 1;
        if p.is_called_strike() {
            s[j * nx + i] += 1;
        }
    }
    let mut cells = Vec::with_capacity(nx * nz);
    for j in 0..nz {
        for i in 0..nx {
            let k = j * nx + i;
            cells.push(HeatCell {
                x_center: bbox.x_min + (i as f64 + 0.5) * cell,
                z_center: bbox.z_min + (j as f64 + 0.5) * cell,
                n: n[k],
                strikes: s[k],
                strike_rate: (n[k] > 0).then(|| s[k] as f64 / n[k] as f64),
            });
        }
    }
    Ok(Heatmap {
        cell_size_ft: cell,
        nx,
        nz,
        cells,
        outside,
        untaken,
    })
}

pub fn write_heatmap<W: Write>(writer: W, map: &Heatmap) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x_center", "z_center", "n", "strike_rate"])?;
    for c in &map.cells {
        w.write_record([
            c.x_center.to_string(),
            c.z_center.to_string(),
            c.n.to_string(),
            c.strike_rate.map_or_else(|| "NA".to_string(), |r| r.to_string()),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<heatmap writer>", e))?;
    Ok(())
}
