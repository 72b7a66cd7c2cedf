use crate::advantage::RolloutGroup;

/// Drops groups whose rewards are all equal. Returns the survivors in input
/// order and the number removed.
pub fn dynamic_filter(groups: Vec<RolloutGroup>) -> (Vec<RolloutGroup>, usize) {
    let before = groups.len();
    let kept: Vec<RolloutGroup> = groups.into_iter().filter(survives).collect();
    let removed = before - kept.len();
    (kept, removed)
}

/// Whether a group carries any within-group reward signal.
pub(crate) fn survives(group: &RolloutGroup) -> bool {
    !group.is_uniform()
}
