//! Detector timestamp streams in integer picoseconds.
//!
//! Binary layout: an ASCII line `MLTS1 <channel> <duration_ps> <count>\n`
//! followed by `count` little-endian `u64` timestamps, nondecreasing.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, RngExt};
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};

pub const MAGIC: &str = "MLTS1";
pub const PS_PER_SECOND: f64 = 1e12;
const MAX_HEADER_LEN: usize = 128;

/// Seconds to the nearest picosecond.
pub fn seconds_to_ps(t: f64) -> Result<u64> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::invalid(format!(
            "time must be finite and >= 0, got {t}"
        )));
    }
    let ps = (t * PS_PER_SECOND).round();
    if ps >= u64::MAX as f64 {
        return Err(Error::invalid(format!(
            "time {t} s overflows the picosecond range"
        )));
    }
    Ok(ps as u64)
}

/// Index of the first element smaller than its predecessor.
pub fn first_inversion(times: &[u64]) -> Option<usize> {
    times.windows(2).position(|w| w[1] < w[0]).map(|i| i + 1)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimestampStream {
    channel: u32,
    duration_ps: u64,
    times_ps: Vec<u64>,
}

impl TimestampStream {
    /// Validates ordering and that every event lies in `[0, duration]`.
    pub fn new(channel: u32, duration_ps: u64, times_ps: Vec<u64>) -> Result<Self> {
        if let Some(index) = first_inversion(&times_ps) {
            return Err(Error::Unsorted { index });
        }
        if let Some(&last) = times_ps.last() {
            if last > duration_ps {
                return Err(Error::invalid(format!(
                    "timestamp {last} ps lies beyond the acquisition duration {duration_ps} ps"
                )));
            }
        }
        Ok(TimestampStream {
            channel,
            duration_ps,
            times_ps,
        })
    }

    pub fn from_seconds(channel: u32, duration_s: f64, times_s: &[f64]) -> Result<Self> {
        let times = times_s
            .iter()
            .map(|&t| seconds_to_ps(t))
            .collect::<Result<Vec<_>>>()?;
        Self::new(channel, seconds_to_ps(duration_s)?, times)
    }

    pub fn channel(&self) -> u32 {
        self.channel
    }

    pub fn duration_ps(&self) -> u64 {
        self.duration_ps
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_ps as f64 / PS_PER_SECOND
    }

    pub fn times_ps(&self) -> &[u64] {
        &self.times_ps
    }

    pub fn times_s(&self) -> impl Iterator<Item = f64> + '_ {
        self.times_ps.iter().map(|&t| t as f64 / PS_PER_SECOND)
    }

    pub fn len(&self) -> usize {
        self.times_ps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_ps.is_empty()
    }

    /// Events per second over the acquisition duration.
    pub fn rate(&self) -> f64 {
        if self.duration_ps == 0 {
            0.0
        } else {
            self.len() as f64 / self.duration_s()
        }
    }

    pub fn write_mlts1<W: Write>(&self, out: W) -> io::Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(
            out,
            "{MAGIC} {} {} {}",
            self.channel,
            self.duration_ps,
            self.times_ps.len()
        )?;
        for t in &self.times_ps {
            out.write_all(&t.to_le_bytes())?;
        }
        out.flush()
    }

    pub fn read_mlts1<R: Read>(input: R) -> Result<Self> {
        let mut input = BufReader::new(input);
        let mut header = Vec::new();
        (&mut input)
            .take(MAX_HEADER_LEN as u64)
            .read_until(b'\n', &mut header)?;
        if header.last() != Some(&b'\n') {
            return Err(Error::Format(
                "missing or overlong MLTS1 header line".into(),
            ));
        }
        let line = std::str::from_utf8(&header[..header.len() - 1])
            .map_err(|_| Error::Format("MLTS1 header is not ASCII".into()))?;
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 4 || fields[0] != MAGIC {
            return Err(Error::Format(format!("bad MLTS1 header {line:?}")));
        }
        let bad = |what: &str| Error::Format(format!("bad {what} in MLTS1 header {line:?}"));
        let channel: u32 = fields[1].parse().map_err(|_| bad("channel"))?;
        let duration_ps: u64 = fields[2].parse().map_err(|_| bad("duration"))?;
        let count: usize = fields[3].parse().map_err(|_| bad("count"))?;

        let mut times = Vec::with_capacity(count.min(1 << 28));
        let mut chunk = vec![0u8; 8 * 65536];
        let mut remaining = count;
        while remaining > 0 {
            let take = remaining.min(65536);
            let buf = &mut chunk[..8 * take];
            input.read_exact(buf).map_err(|e| match e.kind() {
                io::ErrorKind::UnexpectedEof => {
                    Error::Format(format!("MLTS1 body holds fewer than {count} timestamps"))
                }
                _ => Error::Io(e),
            })?;
            times.extend(
                buf.chunks_exact(8)
                    .map(|b| u64::from_le_bytes(b.try_into().unwrap())),
            );
            remaining -= take;
        }
        let mut extra = [0u8; 1];
        if input.read(&mut extra)? != 0 {
            return Err(Error::Format("trailing bytes after MLTS1 body".into()));
        }
        Self::new(channel, duration_ps, times)
    }

    /// CSV with `#` metadata and a `timestamp_ps` column.
    pub fn write_csv<W: Write>(&self, header: &str, out: W) -> io::Result<()> {
        let mut out = BufWriter::new(out);
        out.write_all(header.as_bytes())?;
        writeln!(out, "# channel = {}", self.channel)?;
        writeln!(out, "# duration_ps = {}", self.duration_ps)?;
        writeln!(out, "timestamp_ps")?;
        for t in &self.times_ps {
            writeln!(out, "{t}")?;
        }
        out.flush()
    }

    /// Reads the CSV form. Missing `channel`/`duration_ps` metadata default
    /// to 0 and the last timestamp respectively.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut channel = 0u32;
        let mut duration: Option<u64> = None;
        let mut seen_column = false;
        let mut times = Vec::new();
        for (lineno, line) in BufReader::new(input).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.split_once('=') {
                    let parse_err = |_| {
                        Error::Format(format!("line {}: bad value for {}", lineno + 1, k.trim()))
                    };
                    match k.trim() {
                        "channel" => channel = v.trim().parse().map_err(parse_err)?,
                        "duration_ps" => duration = Some(v.trim().parse().map_err(parse_err)?),
                        _ => {}
                    }
                }
                continue;
            }
            if !seen_column {
                if line != "timestamp_ps" {
                    return Err(Error::Format(format!(
                        "expected `timestamp_ps` column, got {line:?}"
                    )));
                }
                seen_column = true;
                continue;
            }
            times.push(line.parse::<u64>().map_err(|_| {
                Error::Format(format!("line {}: bad timestamp {line:?}", lineno + 1))
            })?);
        }
        if !seen_column {
            return Err(Error::Format("no `timestamp_ps` column".into()));
        }
        let duration = duration.unwrap_or_else(|| times.last().copied().unwrap_or(0));
        Self::new(channel, duration, times)
    }

    pub fn save_mlts1(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.write_mlts1(File::create(path)?)?)
    }

    /// Loads either format, recognizing the binary one by its magic.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut file = File::open(path.as_ref())?;
        let mut magic = [0u8; 5];
        let n = read_up_to(&mut file, &mut magic)?;
        let file = File::open(path.as_ref())?;
        if n == 5 && magic == *MAGIC.as_bytes() {
            Self::read_mlts1(file)
        } else {
            Self::read_csv(file)
        }
    }

    /// Non-paralyzable dead time: an event is dropped if it follows the last
    /// kept event by less than `dead_ps`.
    pub fn with_dead_time(&self, dead_ps: u64) -> TimestampStream {
        let mut kept: Vec<u64> = Vec::with_capacity(self.len());
        for &t in &self.times_ps {
            match kept.last() {
                Some(&last) if t - last < dead_ps => {}
                _ => kept.push(t),
            }
        }
        TimestampStream {
            channel: self.channel,
            duration_ps: self.duration_ps,
            times_ps: kept,
        }
    }

    /// Each event spawns one afterpulse with probability `prob`, delayed by an
    /// exponential of mean `mean_delay_ps`; afterpulses past the end are lost.
    pub fn with_afterpulsing<R: Rng + ?Sized>(
        &self,
        prob: f64,
        mean_delay_ps: f64,
        rng: &mut R,
    ) -> Result<TimestampStream> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::invalid(format!(
                "afterpulse probability must be in [0, 1], got {prob}"
            )));
        }
        if !(mean_delay_ps.is_finite() && mean_delay_ps > 0.0) {
            return Err(Error::invalid("afterpulse delay must be positive"));
        }
        let delay = Exp::new(1.0 / mean_delay_ps).map_err(|e| Error::invalid(e.to_string()))?;
        let mut times = self.times_ps.clone();
        for &t in &self.times_ps {
            if rng.random_bool(prob) {
                let at = t as f64 + delay.sample(rng).round();
                if at <= self.duration_ps as f64 {
                    times.push(at as u64);
                }
            }
        }
        times.sort_unstable();
        Ok(TimestampStream {
            channel: self.channel,
            duration_ps: self.duration_ps,
            times_ps: times,
        })
    }
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            k => filled += k,
        }
    }
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_pcg::Pcg64;

    fn sample() -> TimestampStream {
        TimestampStream::new(2, 1_000_000, vec![0, 5, 5, 17, 999_999]).unwrap()
    }

    #[test]
    fn mlts1_bytes_are_exact() {
        let s = TimestampStream::new(1, 300, vec![1, 258]).unwrap();
        let mut buf = Vec::new();
        s.write_mlts1(&mut buf).unwrap();
        let mut expect = b"MLTS1 1 300 2\n".to_vec();
        expect.extend_from_slice(&[1, 0, 0, 0, 0, 0, 0, 0, 2, 1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(buf, expect);
    }

    #[test]
    fn round_trips() {
        let s = sample();
        let mut bin = Vec::new();
        s.write_mlts1(&mut bin).unwrap();
        assert_eq!(TimestampStream::read_mlts1(&bin[..]).unwrap(), s);
        let mut csv = Vec::new();
        s.write_csv("# test\n", &mut csv).unwrap();
        assert_eq!(TimestampStream::read_csv(&csv[..]).unwrap(), s);
    }

    #[test]
    fn rejects_malformed_files() {
        let s = sample();
        let mut bin = Vec::new();
        s.write_mlts1(&mut bin).unwrap();
        assert!(TimestampStream::read_mlts1(&bin[..bin.len() - 1]).is_err());
        let mut longer = bin.clone();
        longer.push(0);
        assert!(TimestampStream::read_mlts1(&longer[..]).is_err());
        assert!(TimestampStream::read_mlts1(&b"MLTS2 1 2 0\n"[..]).is_err());
        assert!(TimestampStream::read_mlts1(&b"MLTS1 1 2\n"[..]).is_err());
        assert!(TimestampStream::read_csv(&b"time\n1\n"[..]).is_err());
    }

    #[test]
    fn unsorted_reports_index() {
        let err = TimestampStream::new(1, 100, vec![1, 2, 9, 3, 4]).unwrap_err();
        assert!(matches!(err, Error::Unsorted { index: 3 }));
        assert!(TimestampStream::new(1, 10, vec![11]).is_err());
    }

    #[test]
    fn seconds_conversion() {
        let s = TimestampStream::from_seconds(1, 1e-6, &[0.0, 2.6e-12, 5e-9]).unwrap();
        assert_eq!(s.times_ps(), &[0, 3, 5000]);
        assert_eq!(s.duration_ps(), 1_000_000);
        assert!((s.rate() - 3e6).abs() < 1e-6);
    }

    #[test]
    fn dead_time_filter() {
        let s = TimestampStream::new(1, 100, vec![0, 3, 9, 10, 30]).unwrap();
        assert_eq!(s.with_dead_time(10).times_ps(), &[0, 10, 30]);
        assert_eq!(s.with_dead_time(0), s);
    }

    #[test]
    fn afterpulses_stay_sorted_and_in_range() {
        let s = TimestampStream::new(1, 10_000, (0..100).map(|i| i * 100).collect()).unwrap();
        let mut rng = Pcg64::seed_from_u64(9);
        let t = s.with_afterpulsing(0.5, 50.0, &mut rng).unwrap();
        assert!(t.len() > s.len());
        assert!(first_inversion(t.times_ps()).is_none());
        assert!(*t.times_ps().last().unwrap() <= 10_000);
        assert_eq!(s.with_afterpulsing(0.0, 50.0, &mut rng).unwrap(), s);
    }
}
