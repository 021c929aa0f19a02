#include <fstream>
#include <sstream>

#include "sgem/dataio.hpp"
#include "sgem/serialize.hpp"

namespace sgem {

namespace {

std::filesystem::path find_meta_file(const std::filesystem::path& task_dir) {
    if (!std::filesystem::is_directory(task_dir))
        throw IoError("not a directory: " + task_dir.string());
    for (const auto& e : std::filesystem::directory_iterator(task_dir)) {
        const std::string name = e.path().filename().string();
        if (name.starts_with("meta_file_") && name.ends_with(".txt")) return e.path();
    }
    throw IoError("missing meta_file_<task>.txt under " + task_dir.string());
}

std::string task_from_meta(const std::filesystem::path& meta) {
    std::string name = meta.filename().string();
    return name.substr(10, name.size() - 14); // strip meta_file_ / .txt
}

std::filesystem::path find_video_dump(const std::filesystem::path& task_dir,
                                      const std::string& stem) {
    const auto dir = task_dir / "video";
    const auto exact = dir / (stem + "_capture1.frms");
    if (std::filesystem::exists(exact)) return exact;
    if (std::filesystem::is_directory(dir))
        for (const auto& e : std::filesystem::directory_iterator(dir))
            if (e.path().filename().string().starts_with(stem + "_capture1."))
                return e.path();
    throw IoError("missing raw frame dump " + exact.string() +
                  " (decode the video to FRMS first)");
}

} // namespace

void write_frames(const std::filesystem::path& path, const std::vector<FrameGray>& frames) {
    require(!frames.empty(), "write_frames: empty sequence");
    const int h = frames.front().height, w = frames.front().width;
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    bin::write_exact(os, "FRMS", 4);
    bin::write_u16(os, std::uint16_t(h));
    bin::write_u16(os, std::uint16_t(w));
    bin::write_u32(os, std::uint32_t(frames.size()));
    for (const auto& f : frames) {
        require(f.height == h && f.width == w, "write_frames: mixed frame extents");
        bin::write_f32(os, f.values.data(), std::size_t(f.values.size()));
    }
    os.flush();
    if (!os) throw IoError("write failed: " + path.string());
}

std::vector<FrameGray> read_frames(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    const std::string what = path.filename().string();
    bin::expect_magic(is, "FRMS", what);
    const int h = bin::read_u16(is, what + " height");
    const int w = bin::read_u16(is, what + " width");
    const std::uint32_t count = bin::read_u32(is, what + " frame count");
    if (h < 1 || w < 1 || count == 0 || count > 2'000'000)
        throw ParseError("implausible FRMS header in " + what);
    std::vector<FrameGray> frames;
    frames.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        FrameGray f(h, w);
        bin::read_f32(is, f.values.data(), std::size_t(f.values.size()),
                      what + " frame " + std::to_string(i));
        f.clamp01();
        frames.push_back(std::move(f));
    }
    return frames;
}

std::vector<std::string> list_jigsaws_stems(const std::filesystem::path& task_dir) {
    const auto meta = find_meta_file(task_dir);
    std::ifstream is(meta);
    if (!is) throw IoError("cannot open: " + meta.string());
    std::vector<std::string> stems;
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ss(line);
        std::string stem;
        if (ss >> stem) stems.push_back(stem);
    }
    return stems;
}

Trial load_jigsaws_trial(const std::filesystem::path& task_dir, const std::string& stem) {
    const auto meta_path = find_meta_file(task_dir);
    const std::string task = task_from_meta(meta_path);

    // self-proclaimed skill letter from the meta file
    Skill skill = Skill::Intermediate;
    {
        std::ifstream is(meta_path);
        if (!is) throw IoError("cannot open: " + meta_path.string());
        std::string line;
        bool found = false;
        while (std::getline(is, line)) {
            std::istringstream ss(line);
            std::string s, letter;
            if (!(ss >> s) || s != stem) continue;
            if (!(ss >> letter) || letter.size() != 1)
                throw ParseError("meta row for " + stem + " lacks a skill letter");
            skill = skill_from_letter(letter[0]);
            found = true;
            break;
        }
        if (!found)
            throw ParseError("trial " + stem + " not listed in " + meta_path.string());
    }

    // kinematics: whitespace-separated rows of 76 reals
    const auto kin_path = task_dir / "kinematics" / "AllGestures" / (stem + ".txt");
    std::vector<KinematicsVector> kin;
    {
        std::ifstream is(kin_path);
        if (!is) throw IoError("missing kinematics file: " + kin_path.string());
        std::string line;
        int line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            std::istringstream ss(line);
            KinematicsVector kv;
            int count = 0;
            double v;
            while (ss >> v) {
                if (count < kKinDims) kv.values[std::size_t(count)] = float(v);
                ++count;
            }
            if (count == 0) continue; // blank line
            if (count != kKinDims)
                throw ParseError(kin_path.string() + ":" + std::to_string(line_no) +
                                 ": row has " + std::to_string(count) +
                                 " columns, expected 76");
            kin.push_back(kv);
        }
        if (kin.empty()) throw ParseError("no kinematics rows in " + kin_path.string());
    }

    // transcript: rows "start end G<k>"
    const auto tr_path = task_dir / "transcriptions" / (stem + ".txt");
    std::vector<GestureSegment> transcript;
    {
        std::ifstream is(tr_path);
        if (!is) throw IoError("missing transcript file: " + tr_path.string());
        std::string line;
        int line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            std::istringstream ss(line);
            long start, end;
            std::string tok;
            if (!(ss >> start)) continue; // blank line
            if (!(ss >> end >> tok))
                throw ParseError(tr_path.string() + ":" + std::to_string(line_no) +
                                 ": expected 'start end G<k>'");
            bool ok = tok.size() >= 2 && tok[0] == 'G';
            for (std::size_t i = 1; ok && i < tok.size(); ++i)
                ok = std::isdigit(static_cast<unsigned char>(tok[i]));
            if (!ok)
                throw ParseError(tr_path.string() + ":" + std::to_string(line_no) +
                                 ": unknown gesture token '" + tok + "'");
            transcript.push_back({int(start), int(end), tok});
        }
    }

    // frames, downsampled to the working resolution
    const auto video_path = find_video_dump(task_dir, stem);
    std::vector<FrameGray> frames = read_frames(video_path);
    for (auto& f : frames)
        if (f.height != kFrameSize || f.width != kFrameSize)
            f = resize_area(f, kFrameSize, kFrameSize);

    // reconcile frame and kinematics counts by truncating to the shorter
    const std::size_t n = std::min(frames.size(), kin.size());
    frames.resize(n);
    kin.resize(n);

    // clamp transcript to the usable range, dropping segments outside it
    std::vector<GestureSegment> usable;
    for (auto seg : transcript) {
        seg.end_frame = std::min(seg.end_frame, int(n) - 1);
        if (seg.start_frame < 0 || seg.start_frame > seg.end_frame) continue;
        usable.push_back(seg);
    }

    Trial trial;
    trial.trial_id = stem;
    trial.task = task;
    trial.skill = skill;
    trial.frames = std::move(frames);
    trial.kinematics = std::move(kin);
    trial.transcript = std::move(usable);
    trial.validate();
    return trial;
}

} // namespace sgem
