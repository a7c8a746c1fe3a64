//! Timestamped spike events, sorted spike streams, and frozen-noise patterns.

use std::io;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One presynaptic spike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeEvent {
    /// Dense afferent index in `[0, afferent_count)`.
    pub afferent: u32,
    /// Spike time, seconds.
    pub time: f64,
}

/// A time-sorted sequence of spikes from a population of afferents.
///
/// Times normally lie inside `[0, duration]`. Streams produced by jittering
/// keep displaced spikes instead of truncating them, so their times may spill
/// up to the jitter half-width outside that interval; constructors take the
/// permitted margin explicitly and the margin itself is not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeStream {
    afferent_count: u32,
    duration: f64,
    events: Vec<SpikeEvent>,
}

impl SpikeStream {
    /// Builds a stream whose events must all lie inside `[0, duration]`.
    pub fn new(afferent_count: u32, duration: f64, events: Vec<SpikeEvent>) -> Result<Self> {
        Self::with_margin(afferent_count, duration, 0.0, events)
    }

    /// Builds a stream allowing events to spill up to `margin` seconds before
    /// 0 or after `duration`.
    pub fn with_margin(
        afferent_count: u32,
        duration: f64,
        margin: f64,
        events: Vec<SpikeEvent>,
    ) -> Result<Self> {
        if !(duration >= 0.0) || !duration.is_finite() {
            return Err(Error::InvalidStream(format!(
                "duration must be finite and >= 0, got {duration}"
            )));
        }
        if !(margin >= 0.0) || !margin.is_finite() {
            return Err(Error::InvalidStream(format!(
                "margin must be finite and >= 0, got {margin}"
            )));
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, ev) in events.iter().enumerate() {
            if !ev.time.is_finite() {
                return Err(Error::InvalidStream(format!(
                    "event {i} has non-finite time {}",
                    ev.time
                )));
            }
            if ev.time < prev {
                return Err(Error::InvalidStream(format!(
                    "event {i} out of order: {} after {}",
                    ev.time, prev
                )));
            }
            if ev.time < -margin || ev.time > duration + margin {
                return Err(Error::InvalidStream(format!(
                    "event {i} at {} s outside [{}, {}]",
                    ev.time,
                    -margin,
                    duration + margin
                )));
            }
            if ev.afferent >= afferent_count {
                return Err(Error::InvalidStream(format!(
                    "event {i} afferent {} >= afferent_count {afferent_count}",
                    ev.afferent
                )));
            }
            prev = ev.time;
        }
        Ok(SpikeStream {
            afferent_count,
            duration,
            events,
        })
    }

    pub fn afferent_count(&self) -> u32 {
        self.afferent_count
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn events(&self) -> &[SpikeEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Sorted multiset union of two streams. The result spans the larger
    /// duration and afferent count; at equal times, `self`'s events come
    /// first.
    pub fn merge(&self, other: &SpikeStream) -> SpikeStream {
        let mut events = Vec::with_capacity(self.events.len() + other.events.len());
        let (mut i, mut j) = (0, 0);
        while i < self.events.len() && j < other.events.len() {
            if other.events[j].time < self.events[i].time {
                events.push(other.events[j]);
                j += 1;
            } else {
                events.push(self.events[i]);
                i += 1;
            }
        }
        events.extend_from_slice(&self.events[i..]);
        events.extend_from_slice(&other.events[j..]);
        SpikeStream {
            afferent_count: self.afferent_count.max(other.afferent_count),
            duration: self.duration.max(other.duration),
            events,
        }
    }

    /// The same stream translated by `offset` seconds, with `duration` left
    /// unchanged so window alignment against the original time base is the
    /// caller's concern.
    pub fn shifted(&self, offset: f64) -> SpikeStream {
        SpikeStream {
            afferent_count: self.afferent_count,
            duration: self.duration,
            events: self
                .events
                .iter()
                .map(|ev| SpikeEvent {
                    afferent: ev.afferent,
                    time: ev.time + offset,
                })
                .collect(),
        }
    }

    /// Writes the stream as CSV with header `afferent_id,time_s`.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for ev in &self.events {
            w.serialize(SpikeRow {
                afferent_id: ev.afferent,
                time_s: ev.time,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a stream from `afferent_id,time_s` CSV. The file format carries
    /// no metadata, so the afferent count and duration are supplied by the
    /// caller; any spill outside `[0, duration]` is tolerated as margin.
    pub fn read_csv<R: io::Read>(reader: R, afferent_count: u32, duration: f64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut events = Vec::new();
        for row in r.deserialize::<SpikeRow>() {
            let row = row?;
            events.push(SpikeEvent {
                afferent: row.afferent_id,
                time: row.time_s,
            });
        }
        let margin = events
            .iter()
            .map(|ev| (-ev.time).max(ev.time - duration))
            .fold(0.0_f64, f64::max);
        Self::with_margin(afferent_count, duration, margin, events)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SpikeRow {
    afferent_id: u32,
    time_s: f64,
}

/// A frozen-noise pattern: one stored Poisson realization replayed identically
/// at every presentation. The stream duration equals the pattern length, and
/// all events lie inside `[0, duration]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub(crate) stream: SpikeStream,
}

impl Pattern {
    pub fn stream(&self) -> &SpikeStream {
        &self.stream
    }

    pub fn into_stream(self) -> SpikeStream {
        self.stream
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(afferent: u32, time: f64) -> SpikeEvent {
        SpikeEvent { afferent, time }
    }

    #[test]
    fn construction_enforces_order_and_bounds() {
        assert!(SpikeStream::new(2, 1.0, vec![ev(0, 0.1), ev(1, 0.5)]).is_ok());
        assert!(matches!(
            SpikeStream::new(2, 1.0, vec![ev(0, 0.5), ev(1, 0.1)]),
            Err(Error::InvalidStream(_))
        ));
        assert!(matches!(
            SpikeStream::new(2, 1.0, vec![ev(0, 1.5)]),
            Err(Error::InvalidStream(_))
        ));
        assert!(matches!(
            SpikeStream::new(2, 1.0, vec![ev(2, 0.5)]),
            Err(Error::InvalidStream(_))
        ));
        assert!(SpikeStream::with_margin(2, 1.0, 0.6, vec![ev(0, -0.5), ev(1, 1.5)]).is_ok());
    }

    #[test]
    fn merge_is_sorted_union() {
        let a = SpikeStream::new(3, 1.0, vec![ev(0, 0.1), ev(0, 0.4), ev(1, 0.9)]).unwrap();
        let b = SpikeStream::new(2, 0.5, vec![ev(1, 0.2), ev(0, 0.4)]).unwrap();
        let m = a.merge(&b);
        assert_eq!(m.afferent_count(), 3);
        assert_eq!(m.duration(), 1.0);
        let times: Vec<f64> = m.events().iter().map(|e| e.time).collect();
        assert_eq!(times, vec![0.1, 0.2, 0.4, 0.4, 0.9]);
        assert_eq!(m.len(), a.len() + b.len());
        // Ties keep self's event first.
        assert_eq!(m.events()[2].afferent, 0);
    }

    #[test]
    fn csv_round_trip_is_identity() {
        let s =
            SpikeStream::with_margin(5, 0.02, 0.005, vec![ev(3, -0.001), ev(0, 0.0105), ev(4, 0.0241)])
                .unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("afferent_id,time_s\n"));
        let back = SpikeStream::read_csv(buf.as_slice(), 5, 0.02).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn shift_translates_times_only() {
        let s = SpikeStream::new(2, 1.0, vec![ev(0, 0.25), ev(1, 0.75)]).unwrap();
        let t = s.shifted(2.0);
        assert_eq!(t.events()[0].time, 2.25);
        assert_eq!(t.events()[1].time, 2.75);
        assert_eq!(t.duration(), 1.0);
    }
}
