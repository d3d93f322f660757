//! Built-in named scenarios.

use crate::config::{ConfigError, ExperimentConfig};

pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub text: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "fig1b",
        summary: "integrable oscillator without measurement",
        text: "\
scenario = fig1b
mode = sse
seed = 0
output = out/fig1b
hbar = 0.05
s = 1
gamma = 0
a = 5
b = 5
c = 1
d = 0
omega = 0
x0 = -2
p0 = 1
n_max = 1023
dt = 0.0001
t_final = 4
snapshot_interval = 0.01
husimi_times = 0, 2, 4
husimi_x_min = -3.5
husimi_x_max = 3.5
husimi_nx = 141
husimi_p_min = -4
husimi_p_max = 4
husimi_np = 161
classical = true
",
    },
    Preset {
        name: "fig1c",
        summary: "integrable oscillator under joint position-momentum measurement",
        text: "\
scenario = fig1c
mode = sse
seed = 0
output = out/fig1c
hbar = 0.05
s = 1
gamma = 0.7071067811865476
a = 5
b = 5
c = 1
d = 0
omega = 0
x0 = -2
p0 = 1
n_max = 255
dt = 0.0001
t_final = 4
snapshot_interval = 0.01
record_stride = 10
husimi_times = 0, 2, 4
husimi_x_min = -3.5
husimi_x_max = 3.5
husimi_nx = 141
husimi_p_min = -4
husimi_p_max = 4
husimi_np = 161
classical = true
",
    },
    Preset {
        name: "fig1d",
        summary: "integrable oscillator under position-only measurement",
        text: "\
scenario = fig1d
mode = sse-position-only
seed = 0
output = out/fig1d
hbar = 0.05
s = 1
gamma1 = 1
a = 5
b = 5
c = 1
d = 0
omega = 0
x0 = -2
p0 = 1
n_max = 255
dt = 0.0001
t_final = 4
snapshot_interval = 0.01
record_stride = 10
husimi_times = 0, 2, 4
husimi_x_min = -3.5
husimi_x_max = 3.5
husimi_nx = 141
husimi_p_min = -4
husimi_p_max = 4
husimi_np = 161
",
    },
    Preset {
        name: "fig2a",
        summary: "stroboscopic section of the driven double well",
        text: "\
scenario = fig2a
mode = poincare
seed = 0
output = out/fig2a
a = 5
b = -8
c = 1
d = 15
omega = 6.283185307179586
dt = 0.001
poincare_seeds = 20
poincare_x_min = -3
poincare_x_max = 3
poincare_p = 0
n_strobes = 500
strobe_period = 1
",
    },
    Preset {
        name: "fig2b",
        summary: "driven double well without measurement",
        text: "\
scenario = fig2b
mode = sse
seed = 0
output = out/fig2b
hbar = 0.05
s = 1
gamma = 0
a = 5
b = -8
c = 1
d = 15
omega = 6.283185307179586
x0 = -2
p0 = 1
n_max = 1023
dt = 0.0001
t_final = 2
snapshot_interval = 0.01
husimi_times = 0, 1, 2
husimi_x_min = -5
husimi_x_max = 5
husimi_nx = 201
husimi_p_min = -7
husimi_p_max = 7
husimi_np = 281
classical = true
",
    },
    Preset {
        name: "fig2c",
        summary: "driven double well under joint position-momentum measurement",
        text: "\
scenario = fig2c
mode = sse
seed = 0
output = out/fig2c
hbar = 0.05
s = 1
gamma = 0.7071067811865476
a = 5
b = -8
c = 1
d = 15
omega = 6.283185307179586
x0 = -2
p0 = 1
n_max = 511
dt = 0.0001
t_final = 5
snapshot_interval = 0.01
record_stride = 10
husimi_times = 0, 2.5, 5
husimi_x_min = -5
husimi_x_max = 5
husimi_nx = 201
husimi_p_min = -7
husimi_p_max = 7
husimi_np = 281
classical = true
",
    },
    Preset {
        name: "fig2d",
        summary: "driven double well under momentum-only measurement",
        text: "\
scenario = fig2d
mode = sse-momentum-only
seed = 0
output = out/fig2d
hbar = 0.05
s = 1
gamma2 = 1
a = 5
b = -8
c = 1
d = 15
omega = 6.283185307179586
x0 = -2
p0 = 1
n_max = 511
dt = 0.0001
t_final = 5
snapshot_interval = 0.01
record_stride = 10
husimi_times = 0, 2.5, 5
husimi_x_min = -5
husimi_x_max = 5
husimi_nx = 201
husimi_p_min = -7
husimi_p_max = 7
husimi_np = 281
",
    },
    Preset {
        name: "fig3",
        summary: "driven double well near the classical limit",
        text: "\
scenario = fig3
mode = sse
seed = 0
output = out/fig3
hbar = 0.000001
s = 1
gamma = 0.7071067811865476
a = 5
b = -8
c = 1
d = 15
omega = 6.283185307179586
x0 = -2
p0 = 1
n_max = 511
dt = 0.00001
t_final = 5
snapshot_interval = 0.01
record_stride = 100
classical = true
",
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

impl Preset {
    pub fn config(&self) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::parse(self.text)
    }
}
