use serde::{Deserialize, Serialize};

/// Tunable constants shared by the engine, the server and the simulator.
///
/// Every field has a default; overrides are usually supplied as `key = value`
/// pairs (see `puffer-server --constants`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Constants {
    /// One arm-length, in meters. Bubble radii are expressed in this unit.
    pub arm_length_m: f64,
    pub radius_min_al: f64,
    pub radius_max_al: f64,
    /// Radius used by the shortcut and by accepted bubble suggestions.
    pub default_radius_al: f64,
    pub flash_duration_s: f64,
    pub tick_hz: u32,
    pub max_speed_mps: f64,
    /// A soft-hidden pair becomes visible again only beyond `factor * r`.
    pub soft_exit_factor: f64,
    /// Separation slack used when validating the hard-boundary invariant.
    pub separation_epsilon_m: f64,

    pub suggestion_limit: u32,
    pub suggestion_window_s: f64,
    pub suggestion_cooldown_s: f64,
    pub suggestion_expiry_s: f64,

    pub noise_quiet_max: u32,
    pub noise_medium_max: u32,
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            arm_length_m: 0.75,
            radius_min_al: 0.5,
            radius_max_al: 4.0,
            default_radius_al: 1.0,
            flash_duration_s: 3.0,
            tick_hz: 20,
            max_speed_mps: 4.0,
            soft_exit_factor: 1.1,
            separation_epsilon_m: 1e-6,
            suggestion_limit: 5,
            suggestion_window_s: 60.0,
            suggestion_cooldown_s: 120.0,
            suggestion_expiry_s: 30.0,
            noise_quiet_max: 3,
            noise_medium_max: 8,
        }
    }
}

impl Constants {
    pub fn dt(&self) -> f64 {
        1.0 / self.tick_hz as f64
    }

    /// Converts a duration to whole ticks, rounding to nearest.
    pub fn ticks(&self, seconds: f64) -> u64 {
        (seconds * self.tick_hz as f64).round().max(0.0) as u64
    }

    /// Largest displacement a single move intent may request.
    pub fn max_step_m(&self) -> f64 {
        self.max_speed_mps * self.dt()
    }

    pub fn max_radius_m(&self) -> f64 {
        self.radius_max_al * self.arm_length_m
    }

    pub fn flash_ticks(&self) -> u64 {
        self.ticks(self.flash_duration_s)
    }

    pub fn window_ticks(&self) -> u64 {
        self.ticks(self.suggestion_window_s)
    }

    pub fn cooldown_ticks(&self) -> u64 {
        self.ticks(self.suggestion_cooldown_s)
    }

    pub fn expiry_ticks(&self) -> u64 {
        self.ticks(self.suggestion_expiry_s)
    }
}
