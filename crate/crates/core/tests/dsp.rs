mod support;

use support::dsp;

#[test]
fn point_target_lands_on_predicted_range_bin_and_doppler_row() {
    dsp::point_target_bins();
}

#[test]
fn pipeline_reports_the_point_target_velocity_and_doppler_row() {
    dsp::pipeline_point_target();
}

#[test]
fn cfar_false_alarm_rate_matches_configuration() {
    dsp::cfar_false_alarms();
}

#[test]
fn stft_concentrates_pure_tones() {
    dsp::stft_concentration();
}
