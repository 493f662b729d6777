use serde::{Deserialize, Serialize};

use crate::scalar::{lit, Scalar};

/// Every detector and predicate constant in one place.
///
/// All comparisons against these values are strict: a value exactly at a
/// threshold never triggers a violation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Scalar")]
pub struct Thresholds<T> {
    /// Final up-axis tilt from the initial orientation that breaks placement, degrees.
    pub tilt_deg: T,
    /// Default horizontal displacement limit for support goals, meters.
    pub support_disp_m: T,
    /// Unsupported descent that turns a release or loss of support into a fall, meters.
    pub drop_fall_m: T,
    /// Window after a release in which a contact onset counts as an impact, seconds.
    pub settle_s: T,
    /// Tilt while grasped that counts as mishandling an upright critical object, degrees.
    pub mishandle_tilt_deg: T,
    /// Contact-onset speed that counts as a hard impact, m/s.
    pub impact_speed_mps: T,
    /// Joint fraction at or below which an articulated object is closed.
    pub closed_jf: T,
    /// Joint fraction at or above which an articulated object is open.
    pub open_jf: T,
    /// Vertical gap tolerance between bottom and top faces for `ontop`, meters.
    pub ontop_gap_m: T,
    /// Minimum share of the subject's footprint that must overlap the reference for `ontop`.
    pub ontop_footprint: T,
    /// Minimum share of the subject's box that must overlap the container for `inside`.
    pub inside_overlap: T,
    /// Lower bound on the `nextto` center distance, meters.
    pub nextto_min_m: T,
    /// Multiplier on summed horizontal half-extents for `nextto`.
    pub nextto_scale: T,
    /// Mean-Q gap above which two runs are flagged as diverging.
    pub diff_gap: T,
}

impl<T: Scalar> Default for Thresholds<T> {
    fn default() -> Self {
        Thresholds {
            tilt_deg: lit(30.0),
            support_disp_m: lit(0.10),
            drop_fall_m: lit(0.10),
            settle_s: lit(0.5),
            mishandle_tilt_deg: lit(60.0),
            impact_speed_mps: lit(1.0),
            closed_jf: lit(0.05),
            open_jf: lit(0.8),
            ontop_gap_m: lit(0.015),
            ontop_footprint: lit(0.25),
            inside_overlap: lit(0.5),
            nextto_min_m: lit(0.3),
            nextto_scale: lit(1.5),
            diff_gap: lit(0.10),
        }
    }
}

impl<T: Scalar> Thresholds<T> {
    /// Names of thresholds that are not strictly positive.
    pub fn non_positive(&self) -> Vec<&'static str> {
        let fields = [
            ("tilt_deg", self.tilt_deg),
            ("support_disp_m", self.support_disp_m),
            ("drop_fall_m", self.drop_fall_m),
            ("settle_s", self.settle_s),
            ("mishandle_tilt_deg", self.mishandle_tilt_deg),
            ("impact_speed_mps", self.impact_speed_mps),
            ("closed_jf", self.closed_jf),
            ("open_jf", self.open_jf),
            ("ontop_gap_m", self.ontop_gap_m),
            ("ontop_footprint", self.ontop_footprint),
            ("inside_overlap", self.inside_overlap),
            ("nextto_min_m", self.nextto_min_m),
            ("nextto_scale", self.nextto_scale),
            ("diff_gap", self.diff_gap),
        ];
        fields
            .iter()
            .filter(|(_, v)| v.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater))
            .map(|(n, _)| *n)
            .collect()
    }

    /// Converts every field into another scalar type.
    pub fn cast<U: Scalar>(&self) -> Thresholds<U> {
        let c = |v: T| U::from_f64(v.to_f64().unwrap_or(f64::NAN)).unwrap_or_else(U::nan);
        Thresholds {
            tilt_deg: c(self.tilt_deg),
            support_disp_m: c(self.support_disp_m),
            drop_fall_m: c(self.drop_fall_m),
            settle_s: c(self.settle_s),
            mishandle_tilt_deg: c(self.mishandle_tilt_deg),
            impact_speed_mps: c(self.impact_speed_mps),
            closed_jf: c(self.closed_jf),
            open_jf: c(self.open_jf),
            ontop_gap_m: c(self.ontop_gap_m),
            ontop_footprint: c(self.ontop_footprint),
            inside_overlap: c(self.inside_overlap),
            nextto_min_m: c(self.nextto_min_m),
            nextto_scale: c(self.nextto_scale),
            diff_gap: c(self.diff_gap),
        }
    }
}
