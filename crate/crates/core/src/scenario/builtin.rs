use super::{parse, Scenario, ScenarioError};

pub const BUILTIN_NAMES: [&str; 4] = ["singlet-xy", "three-z-x-z", "stapp-cf-z", "stapp-cf-x"];

const SINGLET_XY: &str = "\
# Two spin-1/2 particles: singlet at t1, found in |+x>|+y> at t2.
scenario singlet-xy
space 2 x 2
state singlet = 1/sqrt(2) (|up,down> - |down,up>)
state xy = |+x,+y>
obs s1y = pauli Y @ 1
obs s2x = pauli X @ 2
obs s1ys2x = product(s1y, s2x)
pre singlet
post xy
query replace 1 s1y assert outcome(s1y) == -1
query replace 1 s2x assert outcome(s2x) == -1
query replace 1 s1ys2x assert outcome(s1ys2x) == -1
# What the product rule would predict from the first two answers.
query replace 1 s1ys2x assert outcome(s1ys2x) == 1
config samples 100000 seed 1
";

const THREE_Z_X_Z: &str = "\
# sz(t1) = 1, sx(t) = 1, sz(t2) = -1. Asking for sz(t) instead is meaningless.
scenario three-z-x-z
space 2
state up = |up>
state down = |down>
obs sz = pauli Z @ 1
obs sx = pauli X @ 1
pre up
post down
actual 1 sx = 1
query replace 1 sz assert outcome(sz) == 1
config samples 100000 seed 1
";

// Singlet; particle 1 measured along z (or x), then particle 2 along z with
// the gradient up. The final state is whatever that history leaves behind.
// The query flips the gradient and asks for the same result.
const STAPP_CF_Z: &str = "\
scenario stapp-cf-z
space 2 x 2
state singlet = 1/sqrt(2) (|up,down> - |down,up>)
state after = |down,up>
obs s1z = pauli Z @ 1
obs s2z = pauli Z @ 2
obs s2z_rev = pauli Z @ 2
pre singlet
post after
event 1 s1z = -1
actual 2 s2z = 1
query replace 2 s2z_rev assert outcome(s2z_rev) == outcome(s2z)
config samples 100000 seed 7
";

const STAPP_CF_X: &str = "\
scenario stapp-cf-x
space 2 x 2
state singlet = 1/sqrt(2) (|up,down> - |down,up>)
state after = |+x,-x>
obs s1x = pauli X @ 1
obs s2z = pauli Z @ 2
obs s2z_rev = pauli Z @ 2
pre singlet
post after
event 1 s1x = 1
actual 2 s2z = 1
query replace 2 s2z_rev assert outcome(s2z_rev) == outcome(s2z)
config samples 100000 seed 7
";

/// Source text of a builtin scenario.
pub fn builtin_source(name: &str) -> Option<&'static str> {
    match name {
        "singlet-xy" => Some(SINGLET_XY),
        "three-z-x-z" => Some(THREE_Z_X_Z),
        "stapp-cf-z" => Some(STAPP_CF_Z),
        "stapp-cf-x" => Some(STAPP_CF_X),
        _ => None,
    }
}

pub fn builtin(name: &str) -> Result<Scenario, ScenarioError> {
    let text = builtin_source(name).ok_or_else(|| ScenarioError::UnknownBuiltin(name.to_string()))?;
    parse(text)
}
