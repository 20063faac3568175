//! Preset configs compiled into the binary.

const PRESETS: [(&str, &str); 5] = [
    ("amp", include_str!("../presets/amp.cfg")),
    ("amp_him", include_str!("../presets/amp_him.cfg")),
    ("ampw_him", include_str!("../presets/ampw_him.cfg")),
    ("ampw_him_plus", include_str!("../presets/ampw_him_plus.cfg")),
    ("desk", include_str!("../presets/desk.cfg")),
];

pub fn get(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
