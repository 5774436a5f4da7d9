use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Bit interval in seconds.
pub const BIT_INTERVAL: f64 = 1e-8;
/// Rounded value; the delay ratios the geometry is checked against assume it.
pub const SPEED_OF_LIGHT: f64 = 3e8;
pub const ROOM_WIDTH: f64 = 3.0;

/// How the reflection delay ratio `tau / T` enters the channel taps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayMode {
    /// Use `tau / T` as is, even above one.
    #[default]
    Literal,
    /// Keep only the fractional part of `tau / T`.
    Fractional,
}

/// Two-path room geometry for a photodiode at floor position `position`.
///
/// The LED hangs at (1.5 m, 3 m) and a wall at 3 m produces the reflected path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsiGeometry {
    pub position: f64,
    pub los_distance: f64,
    pub led_wall_distance: f64,
    pub wall_pd_distance: f64,
    /// Reflected-path gain relative to line of sight.
    pub gain: f64,
    pub delay: f64,
    pub delay_ratio: f64,
    pub bit_interval: f64,
    pub speed_of_light: f64,
}

impl IsiGeometry {
    pub fn at(position: f64) -> Result<Self> {
        if !(0.0..=ROOM_WIDTH).contains(&position) {
            return Err(Error::domain(format!("photodiode position {position} outside [0, 3]")));
        }
        let p = position;
        let los_distance = ((1.5 - p).powi(2) + 9.0).sqrt();
        let wall_height = 4.5 / (4.5 - p);
        let led_wall_distance = (wall_height.powi(2) + 2.25).sqrt();
        let wall_pd_distance = ((3.0 - p).powi(2) + (3.0 - wall_height).powi(2)).sqrt();
        let reflected = led_wall_distance + wall_pd_distance;
        let gain = los_distance.powi(4) / reflected.powi(4);
        let delay = reflected / SPEED_OF_LIGHT;
        Ok(Self {
            position,
            los_distance,
            led_wall_distance,
            wall_pd_distance,
            gain,
            delay,
            delay_ratio: delay / BIT_INTERVAL,
            bit_interval: BIT_INTERVAL,
            speed_of_light: SPEED_OF_LIGHT,
        })
    }

    pub fn effective_ratio(&self, mode: DelayMode) -> f64 {
        match mode {
            DelayMode::Literal => self.delay_ratio,
            DelayMode::Fractional => self.delay_ratio.fract(),
        }
    }
}

/// Lower-bidiagonal Toeplitz matrix with diagonal `1 + gain (1 - ratio)` and
/// sub-diagonal `gain * ratio`.
pub fn toeplitz_two_tap(n: usize, gain: f64, ratio: f64) -> Matrix {
    let main = 1.0 + gain * (1.0 - ratio);
    let sub = gain * ratio;
    Matrix::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            main
        } else if i == j + 1 {
            sub
        } else {
            0.0
        }
    })
}

pub fn make_isi_channel(position: f64, n: usize, mode: DelayMode) -> Result<(Matrix, IsiGeometry)> {
    let geometry = IsiGeometry::at(position)?;
    Ok((toeplitz_two_tap(n, geometry.gain, geometry.effective_ratio(mode)), geometry))
}

/// Photodiode position, uniform on `[0, 3]`.
pub fn sample_geometry(rng: &mut dyn RngCore) -> f64 {
    rng.random_range(0.0..=ROOM_WIDTH)
}
