#include <algorithm>
#include <cmath>

#include "sgem/dataio.hpp"
#include "sgem/errors.hpp"
#include "sgem/rng.hpp"

namespace sgem {

float KinematicsVector::rotation_error() const {
    float worst = 0;
    for (int b = 0; b < 4; ++b) {
        const float* r = values.data() + b * kBlockDims + 3;
        // max |R R' - I|
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                float dot = 0;
                for (int k = 0; k < 3; ++k) dot += r[3 * i + k] * r[3 * j + k];
                worst = std::max(worst, std::abs(dot - (i == j ? 1.0f : 0.0f)));
            }
    }
    return worst;
}

std::string to_string(Skill s) {
    switch (s) {
    case Skill::Beginner: return "Beginner";
    case Skill::Intermediate: return "Intermediate";
    case Skill::Expert: return "Expert";
    }
    return "?";
}

char skill_letter(Skill s) {
    switch (s) {
    case Skill::Beginner: return 'N';
    case Skill::Intermediate: return 'I';
    case Skill::Expert: return 'E';
    }
    return '?';
}

Skill skill_from_letter(char c) {
    switch (c) {
    case 'E': return Skill::Expert;
    case 'I': return Skill::Intermediate;
    case 'N': return Skill::Beginner;
    default: throw ParseError(std::string("unknown skill letter '") + c + "'");
    }
}

Skill skill_from_string(const std::string& s) {
    if (s == "Beginner") return Skill::Beginner;
    if (s == "Intermediate") return Skill::Intermediate;
    if (s == "Expert") return Skill::Expert;
    throw ConfigError("unknown skill name '" + s + "'");
}

void Trial::validate() const {
    require(frames.size() == kinematics.size(),
            "trial " + trial_id + ": frames and kinematics lengths differ");
    const int n = int(frames.size());
    int prev_end = -1;
    for (const auto& seg : transcript) {
        require(seg.start_frame <= seg.end_frame,
                "trial " + trial_id + ": segment start > end");
        require(seg.start_frame > prev_end,
                "trial " + trial_id + ": overlapping transcript segments");
        require(seg.start_frame >= 0 && seg.end_frame < n,
                "trial " + trial_id + ": segment outside frame range");
        prev_end = seg.end_frame;
    }
}

namespace {

constexpr float kPixelMeters = 0.0025f; // 64 px span a 0.16 m workspace
constexpr double kBound = 0.07;        // hard position bound (m)

enum Prim { kReach = 0, kOrient = 1, kPull = 2, kTransfer = 3 };

struct TaskDef {
    const char* name;
    const char* gestures[4]; // per primitive, disjoint across tasks
    double base_angle;       // preferred heading for reach
    double reach_len;        // m
    double orbit_radius;     // m
    double orbit_sweep;      // rad
    double pull_amp;         // m
    double pull_hz;
    double pull_angle;
    double transfer_angle;
    double transfer_len;  // m
    double grip_hold[4];  // gripper level per primitive; transfer ramps to 0.8
};

const TaskDef kTasks[3] = {
    {"synthA", {"A1", "A2", "A3", "A4"}, 0.3, 0.042, 0.012, 3.6, 0.0035, 1.5, 1.2, 0.85,
     0.048, {0.15, 0.45, 0.90, 0.00}},
    {"synthB", {"B1", "B2", "B3", "B4"}, 1.7, 0.030, 0.013, 2.4, 0.0040, 1.1, 2.4, -0.70,
     0.038, {0.30, 0.70, 0.50, 0.00}},
    {"synthC", {"C1", "C2", "C3", "C4"}, -1.1, 0.052, 0.011, 4.6, 0.0030, 1.9, 0.3, 2.20,
     0.058, {0.55, 0.20, 0.75, 0.00}},
};

const TaskDef& find_task(const std::string& name) {
    for (const auto& t : kTasks)
        if (name == t.name) return t;
    throw ConfigError("unknown synthetic task '" + name + "'");
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

struct Segment {
    int prim;
    int start, length;
};

// One tool's clean trajectory plus gripper schedule.
struct Track {
    std::vector<double> x, y, grip;
};

// Advance one tool through a primitive. `mirror` flips x-direction and scales
// amplitudes (the second manipulator assists rather than mimics).
void run_primitive(const TaskDef& task, int prim, int length, Rng& rng, Track& tr,
                   bool mirror) {
    const double scale = mirror ? 0.7 : 1.0;
    const double flip = mirror ? -1.0 : 1.0;
    double x0 = tr.x.empty() ? (mirror ? 0.025 : -0.025) : tr.x.back();
    double y0 = tr.y.empty() ? 0.0 : tr.y.back();

    auto push = [&](double x, double y, double g) {
        tr.x.push_back(std::clamp(x, -kBound, kBound));
        tr.y.push_back(std::clamp(y, -kBound, kBound));
        tr.grip.push_back(g);
    };

    switch (prim) {
    case kReach: {
        double ang = task.base_angle + rng.uniform(-0.6f, 0.6f) + (mirror ? 3.14159 : 0.0);
        double len = task.reach_len * scale * double(rng.uniform(0.8f, 1.2f));
        double tx = x0 + len * std::cos(ang), ty = y0 + len * std::sin(ang);
        // steer back inside the workspace
        tx = std::clamp(tx, -0.05, 0.05);
        ty = std::clamp(ty, -0.05, 0.05);
        for (int i = 0; i < length; ++i) {
            const double e = smoothstep(double(i) / std::max(1, length - 1));
            push(x0 + (tx - x0) * e, y0 + (ty - y0) * e, task.grip_hold[kReach]);
        }
        break;
    }
    case kOrient: {
        const double r = task.orbit_radius * scale;
        // orbit center placed toward the workspace origin so the arc stays in
        const double pn = std::hypot(x0, y0);
        double ux = pn > 1e-6 ? x0 / pn : 1.0, uy = pn > 1e-6 ? y0 / pn : 0.0;
        const double cx = x0 - r * ux, cy = y0 - r * uy;
        const double a0 = std::atan2(y0 - cy, x0 - cx);
        const double sweep = task.orbit_sweep * flip * double(rng.uniform(0.85f, 1.15f));
        for (int i = 0; i < length; ++i) {
            const double a = a0 + sweep * double(i) / std::max(1, length - 1);
            push(cx + r * std::cos(a), cy + r * std::sin(a), task.grip_hold[kOrient]);
        }
        break;
    }
    case kPull: {
        const double amp = task.pull_amp * scale;
        const double dirx = std::cos(task.pull_angle) * flip;
        const double diry = std::sin(task.pull_angle);
        for (int i = 0; i < length; ++i) {
            const double s = amp * std::sin(2.0 * 3.14159265358979 * task.pull_hz *
                                            double(i) / kFrameHz);
            push(x0 + s * dirx, y0 + s * diry, task.grip_hold[kPull]);
        }
        break;
    }
    case kTransfer: {
        double len = task.transfer_len * scale * double(rng.uniform(0.8f, 1.2f));
        double tx = x0 + len * std::cos(task.transfer_angle) * flip;
        double ty = y0 + len * std::sin(task.transfer_angle);
        tx = std::clamp(tx, -0.05, 0.05);
        ty = std::clamp(ty, -0.05, 0.05);
        for (int i = 0; i < length; ++i) {
            const double e = double(i) / std::max(1, length - 1);
            const double el = smoothstep(e);
            push(x0 + (tx - x0) * el, y0 + (ty - y0) * el, 0.8 * e); // gripper ramp
        }
        break;
    }
    default: throw ConfigError("unknown primitive");
    }
}

// Smoothed unit-variance noise track, scaled by amp (meters). The smoothing
// window sets the tremor correlation time; a few frames keeps the wobble slow
// enough to register in frame-to-frame flow and in the velocity targets.
std::vector<double> tremor_track(int n, double amp, Rng& rng) {
    std::vector<double> white(static_cast<std::size_t>(n));
    for (auto& v : white) v = rng.next_normal();
    const int r = 4;
    const double sigma = 1.5;
    std::vector<double> k(std::size_t(2 * r + 1));
    double sq = 0;
    for (int i = -r; i <= r; ++i) {
        k[std::size_t(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
        sq += k[std::size_t(i + r)] * k[std::size_t(i + r)];
    }
    const double norm = 1.0 / std::sqrt(sq); // preserves the white variance
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double acc = 0;
        for (int j = -r; j <= r; ++j) {
            int idx = std::clamp(i + j, 0, n - 1);
            acc += k[std::size_t(j + r)] * white[std::size_t(idx)];
        }
        out[std::size_t(i)] = amp * norm * acc;
    }
    return out;
}

std::vector<double> unwrap(const std::vector<double>& a) {
    std::vector<double> out(a.size());
    if (a.empty()) return out;
    out[0] = a[0];
    const double pi = 3.14159265358979323846;
    for (std::size_t i = 1; i < a.size(); ++i) {
        double d = a[i] - a[i - 1];
        while (d > pi) d -= 2 * pi;
        while (d < -pi) d += 2 * pi;
        out[i] = out[i - 1] + d;
    }
    return out;
}

// Headings of the clean path; near-stationary frames hold the last heading.
std::vector<double> headings(const std::vector<double>& x, const std::vector<double>& y) {
    const int n = int(x.size());
    std::vector<double> h(std::size_t(n), 0.0);
    double last = 0.0;
    for (int i = 0; i < n; ++i) {
        const int i0 = std::max(0, i - 1), i1 = std::min(n - 1, i + 1);
        const double vx = x[std::size_t(i1)] - x[std::size_t(i0)];
        const double vy = y[std::size_t(i1)] - y[std::size_t(i0)];
        if (std::hypot(vx, vy) > 1e-9) last = std::atan2(vy, vx);
        h[std::size_t(i)] = last;
    }
    return h;
}

void render_blob(FrameGray& f, double px, double py, float intensity) {
    const double sigma = 2.0; // px
    const int r = 8;
    const int cx = int(std::lround(px)), cy = int(std::lround(py));
    for (int y = std::max(0, cy - r); y <= std::min(f.height - 1, cy + r); ++y)
        for (int x = std::max(0, cx - r); x <= std::min(f.width - 1, cx + r); ++x) {
            const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
            f.at(y, x) += intensity * float(std::exp(-d2 / (2 * sigma * sigma)));
        }
}

// Fills one manipulator pair (slave block + master block scaled by 1.5).
void fill_blocks(KinematicsVector& kv, Manipulator slave, Manipulator master,
                 double x, double y, double vx, double vy, double heading,
                 double heading_rate, double grip) {
    const float c = float(std::cos(heading)), s = float(std::sin(heading));
    const float rot[9] = {c, -s, 0, s, c, 0, 0, 0, 1};
    for (auto [m, scale] : {std::pair{slave, 1.0f}, std::pair{master, 1.5f}}) {
        float* b = kv.block(m);
        b[0] = float(x) * scale;
        b[1] = float(y) * scale;
        b[2] = 0.0f;
        std::copy_n(rot, 9, b + 3);
        b[12] = float(vx) * scale;
        b[13] = float(vy) * scale;
        b[14] = 0.0f;
        b[15] = 0.0f;
        b[16] = 0.0f;
        b[17] = float(heading_rate);
        b[18] = float(grip);
    }
}

} // namespace

const std::vector<std::string>& synthetic_tasks() {
    static const std::vector<std::string> names = {"synthA", "synthB", "synthC"};
    return names;
}

std::vector<std::string> synthetic_gestures(const std::string& task) {
    const TaskDef& t = find_task(task);
    return {t.gestures[0], t.gestures[1], t.gestures[2], t.gestures[3]};
}

Trial generate_synthetic_trial(const SyntheticSpec& spec, std::uint64_t seed) {
    require(spec.duration_frames >= 150, "synthetic trial duration must be >= 150 frames");
    const TaskDef& task = find_task(spec.task);

    // independent deterministic streams per concern
    Rng rng_plan(derive_seed(seed, std::string(task.name) + "/plan"));
    Rng rng_tremor(derive_seed(seed, std::string(task.name) + "/tremor"));

    double tremor_px = 0.2; // Expert
    if (spec.skill == Skill::Beginner) tremor_px = 1.5;
    if (spec.skill == Skill::Intermediate)
        tremor_px = double(rng_tremor.uniform(0.2f, 1.5f)); // bridges both clusters

    // plan the primitive sequence
    const int n = spec.duration_frames;
    std::vector<Segment> plan;
    int t = 0, last = -1;
    while (t < n) {
        int prim = int(rng_plan.next_below(4));
        while (prim == last) prim = int(rng_plan.next_below(4));
        int len = rng_plan.next_int(60, 120);
        if (n - t < 60) len = n - t; // short tail; windowing may discard it
        len = std::min(len, n - t);
        plan.push_back({prim, t, len});
        last = prim;
        t += len;
    }

    // clean trajectories for both tools
    Track left, right;
    for (const auto& seg : plan) {
        run_primitive(task, seg.prim, seg.length, rng_plan, left, false);
        run_primitive(task, seg.prim, seg.length, rng_plan, right, true);
    }

    // final positions = clean + skill tremor
    const double amp_m = tremor_px * double(kPixelMeters);
    const auto tlx = tremor_track(n, amp_m, rng_tremor);
    const auto tly = tremor_track(n, amp_m, rng_tremor);
    const auto trx = tremor_track(n, amp_m, rng_tremor);
    const auto try_ = tremor_track(n, amp_m, rng_tremor);

    std::vector<double> lx(static_cast<std::size_t>(n)), ly(static_cast<std::size_t>(n)), rx(static_cast<std::size_t>(n)),
        ry(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        lx[std::size_t(i)] = std::clamp(left.x[std::size_t(i)] + tlx[std::size_t(i)], -kBound, kBound);
        ly[std::size_t(i)] = std::clamp(left.y[std::size_t(i)] + tly[std::size_t(i)], -kBound, kBound);
        rx[std::size_t(i)] = std::clamp(right.x[std::size_t(i)] + trx[std::size_t(i)], -kBound, kBound);
        ry[std::size_t(i)] = std::clamp(right.y[std::size_t(i)] + try_[std::size_t(i)], -kBound, kBound);
    }

    // headings follow the realized (tremored) motion, like a pose log would
    const auto head_l = headings(lx, ly);
    const auto head_r = headings(rx, ry);
    const auto uh_l = unwrap(head_l);
    const auto uh_r = unwrap(head_r);

    auto vel = [n](const std::vector<double>& p, int i) {
        const int i0 = std::max(0, i - 1), i1 = std::min(n - 1, i + 1);
        return (p[std::size_t(i1)] - p[std::size_t(i0)]) / (double(i1 - i0) / kFrameHz);
    };
    auto rate = [n](const std::vector<double>& a, int i) {
        const int i0 = std::max(0, i - 1), i1 = std::min(n - 1, i + 1);
        return (a[std::size_t(i1)] - a[std::size_t(i0)]) / (double(i1 - i0) / kFrameHz);
    };

    Trial trial;
    trial.task = task.name;
    trial.skill = spec.skill;
    {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%s_%c%04llx", task.name, skill_letter(spec.skill),
                      (unsigned long long)(seed & 0xffff));
        trial.trial_id = buf;
    }

    trial.frames.reserve(std::size_t(n));
    trial.kinematics.reserve(std::size_t(n));
    for (int i = 0; i < n; ++i) {
        FrameGray f(kFrameSize, kFrameSize);
        f.values.setConstant(0.03f);
        const double plx = lx[std::size_t(i)] / kPixelMeters + kFrameSize / 2.0;
        const double ply = ly[std::size_t(i)] / kPixelMeters + kFrameSize / 2.0;
        const double prx = rx[std::size_t(i)] / kPixelMeters + kFrameSize / 2.0;
        const double pry = ry[std::size_t(i)] / kPixelMeters + kFrameSize / 2.0;
        render_blob(f, plx, ply, 0.9f);
        render_blob(f, prx, pry, 0.55f);
        f.clamp01();
        trial.frames.push_back(std::move(f));

        KinematicsVector kv;
        fill_blocks(kv, Manipulator::SlaveLeft, Manipulator::MasterLeft, lx[std::size_t(i)],
                    ly[std::size_t(i)], vel(lx, i), vel(ly, i), head_l[std::size_t(i)],
                    rate(uh_l, i), left.grip[std::size_t(i)]);
        fill_blocks(kv, Manipulator::SlaveRight, Manipulator::MasterRight, rx[std::size_t(i)],
                    ry[std::size_t(i)], vel(rx, i), vel(ry, i), head_r[std::size_t(i)],
                    rate(uh_r, i), right.grip[std::size_t(i)]);
        trial.kinematics.push_back(kv);
    }

    for (const auto& seg : plan)
        trial.transcript.push_back(
            {seg.start, seg.start + seg.length - 1, task.gestures[seg.prim]});

    trial.validate();
    return trial;
}

} // namespace sgem
