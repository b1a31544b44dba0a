//! Named simulator scenarios for `keytrack simulate`.

use keytrack_core::layout::{MarkerLayout, MarkerStyle};
use keytrack_core::simulator::{scenario_fig4, Deformation, Envelope, Scenario};
use keytrack_core::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Idle,
    Shear,
    Indent,
    Fig4,
}

const PRESS: Envelope = Envelope::Trapezoid {
    start: 10,
    rise: 20,
    hold: 40,
    fall: 20,
};

impl Preset {
    pub fn build(self, style: MarkerStyle) -> Scenario {
        if self == Preset::Fig4 {
            return scenario_fig4(style);
        }
        let layout = MarkerLayout::default_grid(style);
        let center = Point2::new(layout.frame_size().0 as f64 / 2.0, layout.frame_size().1 as f64 / 2.0);
        let mut s = Scenario::new(layout, 100);
        s.seed = 1;
        s.noise_std = 0.02;
        s.blur_sigma_px = 0.8;
        match self {
            Preset::Idle | Preset::Fig4 => {}
            Preset::Shear => {
                s.deformation = Deformation::UniformShear {
                    shift: Point2::new(5.0, -3.0),
                };
                s.envelope = PRESS;
            }
            Preset::Indent => {
                s.deformation = Deformation::RadialIndent {
                    center,
                    peak_px: 8.0,
                    falloff_px: 60.0,
                };
                s.envelope = PRESS;
            }
        }
        s
    }
}
