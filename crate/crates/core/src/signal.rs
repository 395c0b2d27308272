//! Raw IMU frames, their first-order derivatives, and the rolling window the
//! gating and feature stages read from.

use std::collections::VecDeque;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Nominal IMU sampling rate of the reference phones.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 416.0;

/// Length of the rolling data window in seconds.
pub const WINDOW_SECONDS: f64 = 0.150;

/// Number of channels in a frame: accelerometer x, y, z then gyroscope x, y, z.
pub const CHANNELS: usize = 6;

/// One raw accelerometer (m/s²) and gyroscope (rad/s) sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuFrame {
    pub timestamp_us: i64,
    pub accel: [f64; 3],
    pub gyro: [f64; 3],
}

impl ImuFrame {
    pub fn new(timestamp_us: i64, accel: [f64; 3], gyro: [f64; 3]) -> Self {
        Self {
            timestamp_us,
            accel,
            gyro,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.accel
            .iter()
            .chain(self.gyro.iter())
            .all(|v| v.is_finite())
    }
}

/// Per-sample difference of two consecutive [`ImuFrame`]s.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DerivFrame {
    pub timestamp_us: i64,
    pub d_accel: [f64; 3],
    pub d_gyro: [f64; 3],
}

impl DerivFrame {
    pub fn zero(timestamp_us: i64) -> Self {
        Self {
            timestamp_us,
            ..Self::default()
        }
    }

    /// Channel `c` in feature order: d_ax, d_ay, d_az, d_gx, d_gy, d_gz.
    pub fn channel(&self, c: usize) -> f64 {
        if c < 3 {
            self.d_accel[c]
        } else {
            self.d_gyro[c - 3]
        }
    }

    pub fn d_az(&self) -> f64 {
        self.d_accel[2]
    }
}

/// Nominal spacing between frames at `sample_rate_hz`, in microseconds.
pub fn nominal_period_us(sample_rate_hz: f64) -> f64 {
    1e6 / sample_rate_hz
}

/// Window capacity in samples covering [`WINDOW_SECONDS`] at the given rate.
///
/// Rounded up so the window never covers less than 150 ms (63 at 416 Hz).
pub fn window_capacity(sample_rate_hz: f64) -> usize {
    (WINDOW_SECONDS * sample_rate_hz).ceil() as usize
}

fn is_gap(prev: i64, next: i64, sample_rate_hz: f64) -> bool {
    (next - prev) as f64 > 2.0 * nominal_period_us(sample_rate_hz)
}

/// Incremental differentiator for streaming use.
///
/// The first frame, and the first frame after a gap longer than two nominal
/// periods, emit an all-zero derivative.
#[derive(Clone, Debug)]
pub struct Differentiator {
    sample_rate_hz: f64,
    previous: Option<ImuFrame>,
    index: usize,
}

impl Differentiator {
    pub fn new(sample_rate_hz: f64) -> Self {
        Self {
            sample_rate_hz,
            previous: None,
            index: 0,
        }
    }

    pub fn push(&mut self, frame: ImuFrame) -> Result<DerivFrame> {
        if !frame.is_finite() {
            return Err(Error::NonFinite(self.index));
        }
        let out = match self.previous {
            Some(prev) if frame.timestamp_us <= prev.timestamp_us => {
                return Err(Error::NonMonotonic {
                    index: self.index,
                    previous: prev.timestamp_us,
                    current: frame.timestamp_us,
                });
            }
            Some(prev) if !is_gap(prev.timestamp_us, frame.timestamp_us, self.sample_rate_hz) => {
                let mut d = DerivFrame::zero(frame.timestamp_us);
                for axis in 0..3 {
                    d.d_accel[axis] = frame.accel[axis] - prev.accel[axis];
                    d.d_gyro[axis] = frame.gyro[axis] - prev.gyro[axis];
                }
                d
            }
            _ => DerivFrame::zero(frame.timestamp_us),
        };
        self.previous = Some(frame);
        self.index += 1;
        Ok(out)
    }
}

/// Differentiates a whole stream at the default sample rate.
pub fn differentiate(stream: &[ImuFrame]) -> Result<Vec<DerivFrame>> {
    differentiate_at(stream, DEFAULT_SAMPLE_RATE_HZ)
}

pub fn differentiate_at(stream: &[ImuFrame], sample_rate_hz: f64) -> Result<Vec<DerivFrame>> {
    if stream.is_empty() {
        return Err(Error::Empty("IMU stream".into()));
    }
    let mut diff = Differentiator::new(sample_rate_hz);
    stream.iter().map(|f| diff.push(*f)).collect()
}

/// Rolling buffer of the most recent derivative frames.
#[derive(Clone, Debug)]
pub struct SignalWindow {
    capacity: usize,
    sample_rate_hz: f64,
    frames: VecDeque<DerivFrame>,
    discontinuous: bool,
}

impl Default for SignalWindow {
    fn default() -> Self {
        Self::new(DEFAULT_SAMPLE_RATE_HZ)
    }
}

impl SignalWindow {
    /// Window sized to 150 ms at `sample_rate_hz`.
    pub fn new(sample_rate_hz: f64) -> Self {
        Self::with_capacity(window_capacity(sample_rate_hz), sample_rate_hz)
    }

    pub fn with_capacity(capacity: usize, sample_rate_hz: f64) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        assert!(sample_rate_hz > 0.0, "sample rate must be positive");
        Self {
            capacity,
            sample_rate_hz,
            frames: VecDeque::with_capacity(capacity + 1),
            discontinuous: false,
        }
    }

    /// Builds a window holding the last `capacity` of `frames`.
    pub fn from_frames(
        frames: &[DerivFrame],
        capacity: usize,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        let mut window = Self::with_capacity(capacity, sample_rate_hz);
        for f in frames {
            window.push(*f)?;
        }
        Ok(window)
    }

    pub fn push(&mut self, frame: DerivFrame) -> Result<()> {
        if let Some(last) = self.frames.back() {
            if frame.timestamp_us <= last.timestamp_us {
                return Err(Error::StaleFrame {
                    last: last.timestamp_us,
                    current: frame.timestamp_us,
                });
            }
            if is_gap(last.timestamp_us, frame.timestamp_us, self.sample_rate_hz) {
                self.discontinuous = true;
            }
        }
        self.frames.push_back(frame);
        if self.frames.len() > self.capacity {
            self.frames.pop_front();
        }
        Ok(())
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// True once any pushed frame followed a gap of more than two periods.
    pub fn is_discontinuous(&self) -> bool {
        self.discontinuous
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &DerivFrame> + '_ {
        self.frames.iter()
    }

    pub fn get(&self, index: usize) -> Option<&DerivFrame> {
        self.frames.get(index)
    }

    /// Immutable copy of the current contents, oldest first.
    pub fn snapshot(&self) -> Vec<DerivFrame> {
        self.frames.iter().copied().collect()
    }

    /// `(timestamp, d_az)` pairs, the gating signal.
    pub fn z_signal(&self) -> Vec<(i64, f64)> {
        self.frames
            .iter()
            .map(|f| (f.timestamp_us, f.d_az()))
            .collect()
    }

    pub fn clear(&mut self) {
        self.frames.clear();
        self.discontinuous = false;
    }
}

#[derive(Serialize, Deserialize)]
struct StreamRow {
    t_us: i64,
    ax: f64,
    ay: f64,
    az: f64,
    gx: f64,
    gy: f64,
    gz: f64,
}

/// Reads a stream CSV with header `t_us,ax,ay,az,gx,gy,gz`.
pub fn read_stream_csv<R: Read>(reader: R) -> Result<Vec<ImuFrame>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["t_us", "ax", "ay", "az", "gx", "gy", "gz"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Schema {
            expected: expected.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut frames = Vec::new();
    for row in rdr.deserialize() {
        let row: StreamRow = row?;
        frames.push(ImuFrame::new(
            row.t_us,
            [row.ax, row.ay, row.az],
            [row.gx, row.gy, row.gz],
        ));
    }
    Ok(frames)
}

pub fn write_stream_csv<W: Write>(writer: W, frames: &[ImuFrame]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for f in frames {
        wtr.serialize(StreamRow {
            t_us: f.timestamp_us,
            ax: f.accel[0],
            ay: f.accel[1],
            az: f.accel[2],
            gx: f.gyro[0],
            gy: f.gyro[1],
            gz: f.gyro[2],
        })?;
    }
    wtr.flush()?;
    Ok(())
}
