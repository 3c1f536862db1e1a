#include "ionhom/emitter.hpp"

#include <algorithm>

namespace ionhom {

void EmissionStream::validate() const {
    require(span >= 0, "stream span must be >= 0");
    for (std::size_t k = 0; k < times.size(); ++k) {
        require(times[k] >= 0 && times[k] <= span, "stream timestamp outside [0, span]");
        require(k == 0 || times[k] > times[k - 1], "stream timestamps must be strictly increasing");
    }
}

double scatter_for_zero_peak_ratio(double p_exc, double area_ratio) {
    require(area_ratio >= 0 && area_ratio < 1, "area ratio must lie in [0, 1)");
    // Per pulse and channel: ion a, scatter y*a. Zero peak 2*y*a^2 + y^2*a^2,
    // side peak (1 + y)^2 a^2, so ratio = 1 - 1/(1 + y)^2.
    const double y = 1.0 / std::sqrt(1.0 - area_ratio) - 1.0;
    return p_exc * y;
}

void PulseParams::validate() const {
    require(std::isfinite(rep_period) && rep_period > 0, "pulse.rep_period must be > 0");
    require(std::isfinite(lifetime) && lifetime > 0, "pulse.lifetime must be > 0");
    require(rep_period > lifetime, "pulse.rep_period must exceed pulse.lifetime");
    require(p_exc >= 0 && p_exc <= 1, "pulse.p_exc must lie in [0, 1]");
    require(std::isfinite(scatter_per_pulse) && scatter_per_pulse >= 0, "pulse.scatter_per_pulse must be >= 0");
    require(std::isfinite(pulse_duration) && pulse_duration >= 0, "pulse.pulse_duration must be >= 0");
}

void DutyCycle::validate() const {
    require(std::isfinite(cool) && cool > 0, "duty.cool must be > 0");
    require(std::isfinite(measure) && measure > 0, "duty.measure must be > 0");
}

void make_strictly_increasing(std::vector<Picoseconds>& times, Picoseconds floor) {
    std::sort(times.begin(), times.end());
    Picoseconds last = floor;
    for (auto& t : times) {
        if (t <= last) t = last + 1;
        last = t;
    }
}

CwEmitter::CwEmitter(std::shared_ptr<const WaitingTimeSampler> sampler, Rng rng)
    : sampler_(std::move(sampler)), rng_(std::move(rng)) {
    advance();
}

void CwEmitter::advance() {
    next_exact_ += sampler_->sample(rng_) * kPsPerSecond;
    next_ = std::max(static_cast<Picoseconds>(std::llround(next_exact_)), last_ + 1);
}

std::vector<Picoseconds> CwEmitter::emit_until(Picoseconds end) {
    std::vector<Picoseconds> out;
    while (next_ < end) {
        out.push_back(next_);
        last_ = next_;
        advance();
    }
    return out;
}

PulsedEmitter::PulsedEmitter(const PulseParams& pulse, Rng rng)
    : pulse_(pulse), rng_(std::move(rng)), rep_(to_ps(pulse.rep_period)),
      window_(std::max<Picoseconds>(1, to_ps(pulse.pulse_duration))) {
    pulse_.validate();
    require(rep_ > 0, "pulse.rep_period below timestamp resolution");
}

PulsedEmitter::Chunk PulsedEmitter::emit_until(Picoseconds end) {
    std::bernoulli_distribution excite(pulse_.p_exc);
    std::exponential_distribution<double> decay(1.0 / (pulse_.lifetime * kPsPerSecond));
    std::poisson_distribution<int> scatter(pulse_.scatter_per_pulse);
    std::uniform_int_distribution<Picoseconds> inside(0, window_ - 1);
    const bool any_scatter = pulse_.scatter_per_pulse > 0;

    for (; next_pulse_ * rep_ < end; ++next_pulse_) {
        const Picoseconds t0 = next_pulse_ * rep_;
        // At most one ion photon per pulse.
        if (excite(rng_)) pending_ion_.push_back(t0 + static_cast<Picoseconds>(std::llround(decay(rng_))));
        if (any_scatter) {
            for (int n = scatter(rng_); n > 0; --n) pending_scatter_.push_back(t0 + inside(rng_));
        }
    }

    auto split = [end](std::vector<Picoseconds>& pending, Picoseconds& last) {
        make_strictly_increasing(pending, last);
        const auto cut = std::lower_bound(pending.begin(), pending.end(), end);
        std::vector<Picoseconds> ready(pending.begin(), cut);
        pending.erase(pending.begin(), cut);
        if (!ready.empty()) last = ready.back();
        return ready;
    };
    Chunk chunk;
    chunk.ion = split(pending_ion_, last_ion_);
    chunk.scatter = split(pending_scatter_, last_scatter_);
    return chunk;
}

EmissionStream simulate_cw_stream(const AtomParams& atom, double span, Rng& rng, int source_id) {
    atom.validate();
    require(std::isfinite(span) && span > 0, "span must be > 0");
    EmissionStream stream{source_id, SourceKind::Ion, {}, to_ps(span)};
    if (atom.rabi == 0) return stream;
    CwEmitter emitter(std::make_shared<const WaitingTimeSampler>(atom), std::move(rng));
    stream.times = emitter.emit_until(stream.span + 1);
    rng = emitter.take_rng();
    return stream;
}

std::pair<EmissionStream, EmissionStream> simulate_pulsed_stream(const PulseParams& pulse, double span, Rng& rng,
                                                                 int source_id) {
    pulse.validate();
    require(std::isfinite(span) && span > pulse.rep_period, "span must exceed pulse.rep_period");
    const Picoseconds span_ps = to_ps(span);
    PulsedEmitter emitter(pulse, std::move(rng));
    auto chunk = emitter.emit_until(span_ps + 1);
    rng = emitter.take_rng();
    return {EmissionStream{source_id, SourceKind::Ion, std::move(chunk.ion), span_ps},
            EmissionStream{source_id, SourceKind::Scatter, std::move(chunk.scatter), span_ps}};
}

bool in_measurement_window(Picoseconds t, const DutyCycle& duty) {
    const Picoseconds measure = to_ps(duty.measure);
    const Picoseconds period = measure + to_ps(duty.cool);
    return t % period < measure;
}

EmissionStream apply_duty_cycle(const EmissionStream& stream, const DutyCycle& duty) {
    duty.validate();
    EmissionStream out{stream.source_id, stream.kind, {}, stream.span};
    out.times.reserve(stream.times.size() / 3);
    for (auto t : stream.times)
        if (in_measurement_window(t, duty)) out.times.push_back(t);
    return out;
}

}  // namespace ionhom
