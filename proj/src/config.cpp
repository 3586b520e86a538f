#include "iic/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "iic/dataio.hpp"

namespace iic {

TransformPolicy RunConfig::transform_policy() const {
    TransformPolicy p;
    p.enable_crop = crop;
    p.crop_size = crop_size;
    p.enable_hflip = hflip;
    p.enable_color = color;
    p.color_scale_min = color_scale_min;
    p.color_scale_max = color_scale_max;
    p.color_shift_min = color_shift_min;
    p.color_shift_max = color_shift_max;
    p.enable_rotation = rotation;
    p.rotation_max_deg = rotation_max_deg;
    return p;
}

SegAverageMode RunConfig::seg_average_mode() const {
    if (average_mode == "outside") return SegAverageMode::outside;
    if (average_mode == "inside") return SegAverageMode::inside;
    throw ConfigError("average_mode must be 'outside' or 'inside', got '" + average_mode + "'");
}

void RunConfig::validate() const {
    if (h < 1) throw ConfigError("h must be >= 1");
    if (r < 1) throw ConfigError("r must be >= 1");
    if (d < 0) throw ConfigError("d must be >= 0");
    if (lambda < 1.0) throw ConfigError("lambda must be >= 1");
    if (k_gt < 2) throw ConfigError("k_gt must be >= 2");
    if (aux && k_aux <= k_gt) throw ConfigError("k_aux must exceed k_gt");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (batch_size < r) throw ConfigError("batch_size must be >= r");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (dtype != "f32" && dtype != "f64") throw ConfigError("dtype must be f32 or f64");
    if (dataset != "gauss" && dataset != "textures" && dataset != "mnist")
        throw ConfigError("dataset must be gauss, textures, or mnist");
    if (split != "unsupervised_full" && split != "separated")
        throw ConfigError("split must be unsupervised_full or separated");
    if (split == "separated" && !(train_frac > 0.0 && train_frac < 1.0))
        throw ConfigError("train_frac must be in (0,1)");
    if (task == Task::segment && preset == "mlp-small")
        throw ConfigError("segmentation requires the cnn-small preset");
    if (task == Task::segment && crop)
        throw ConfigError("random crops are not supported for segmentation runs (per-pixel labels stay full-frame)");
    if (dataset == "mnist" && (mnist_images.empty() || mnist_labels.empty()))
        throw ConfigError("mnist dataset requires mnist_images and mnist_labels paths");
    seg_average_mode();  // validates average_mode
}

namespace {

std::string bool_str(bool b) { return b ? "true" : "false"; }

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::string RunConfig::to_string() const {
    std::ostringstream ss;
    ss << "task = " << (task == Task::cluster ? "cluster" : "segment") << "\n";
    ss << "dataset = " << dataset << "\n";
    ss << "gauss_centers = " << gauss_centers << "\n";
    ss << "gauss_sigma = " << format_metric(gauss_sigma) << "\n";
    ss << "gauss_jitter = " << format_metric(gauss_jitter) << "\n";
    ss << "gauss_n_per_cluster = " << gauss_n_per_cluster << "\n";
    ss << "tex_n_images = " << tex_n_images << "\n";
    ss << "tex_size = " << tex_size << "\n";
    ss << "mnist_images = " << mnist_images << "\n";
    ss << "mnist_labels = " << mnist_labels << "\n";
    ss << "mnist_subset = " << mnist_subset << "\n";
    ss << "preset = " << preset << "\n";
    ss << "k_gt = " << k_gt << "\n";
    ss << "k_aux = " << k_aux << "\n";
    ss << "h = " << h << "\n";
    ss << "aux = " << bool_str(aux) << "\n";
    ss << "lambda = " << format_metric(lambda) << "\n";
    ss << "clamp_eps = " << format_metric(clamp_eps) << "\n";
    ss << "d = " << d << "\n";
    ss << "average_mode = " << average_mode << "\n";
    ss << "epochs = " << epochs << "\n";
    ss << "batch_size = " << batch_size << "\n";
    ss << "r = " << r << "\n";
    ss << "lr = " << format_metric(lr) << "\n";
    ss << "seed = " << seed << "\n";
    ss << "dtype = " << dtype << "\n";
    ss << "checkpoint_every = " << checkpoint_every << "\n";
    ss << "sobel = " << bool_str(sobel) << "\n";
    ss << "jitter = " << format_metric(jitter) << "\n";
    ss << "crop = " << bool_str(crop) << "\n";
    ss << "crop_size = " << crop_size << "\n";
    ss << "hflip = " << bool_str(hflip) << "\n";
    ss << "color = " << bool_str(color) << "\n";
    ss << "color_scale_min = " << format_metric(color_scale_min) << "\n";
    ss << "color_scale_max = " << format_metric(color_scale_max) << "\n";
    ss << "color_shift_min = " << format_metric(color_shift_min) << "\n";
    ss << "color_shift_max = " << format_metric(color_shift_max) << "\n";
    ss << "rotation = " << bool_str(rotation) << "\n";
    ss << "rotation_max_deg = " << format_metric(rotation_max_deg) << "\n";
    ss << "split = " << split << "\n";
    ss << "train_frac = " << format_metric(train_frac) << "\n";
    ss << "out_dir = " << out_dir << "\n";
    return ss.str();
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::map<std::string, std::function<void(const std::string&)>> setters;
    auto set_str = [](std::string& dst) { return [&dst](const std::string& v) { dst = v; }; };
    auto set_i64 = [](int64_t& dst) { return [&dst](const std::string& v) { dst = std::stoll(v); }; };
    auto set_f64 = [](double& dst) { return [&dst](const std::string& v) { dst = std::stod(v); }; };

    setters["task"] = [&cfg](const std::string& v) {
        if (v == "cluster")
            cfg.task = Task::cluster;
        else if (v == "segment")
            cfg.task = Task::segment;
        else
            throw ConfigError("task must be cluster or segment, got '" + v + "'");
    };
    setters["dataset"] = set_str(cfg.dataset);
    setters["gauss_centers"] = set_str(cfg.gauss_centers);
    setters["gauss_sigma"] = set_f64(cfg.gauss_sigma);
    setters["gauss_jitter"] = set_f64(cfg.gauss_jitter);
    setters["gauss_n_per_cluster"] = set_i64(cfg.gauss_n_per_cluster);
    setters["tex_n_images"] = set_i64(cfg.tex_n_images);
    setters["tex_size"] = set_i64(cfg.tex_size);
    setters["mnist_images"] = set_str(cfg.mnist_images);
    setters["mnist_labels"] = set_str(cfg.mnist_labels);
    setters["mnist_subset"] = set_i64(cfg.mnist_subset);
    setters["preset"] = set_str(cfg.preset);
    setters["k_gt"] = set_i64(cfg.k_gt);
    setters["k_aux"] = set_i64(cfg.k_aux);
    setters["h"] = set_i64(cfg.h);
    setters["aux"] = [&cfg](const std::string& v) { cfg.aux = parse_bool(v, "aux"); };
    setters["lambda"] = set_f64(cfg.lambda);
    setters["clamp_eps"] = set_f64(cfg.clamp_eps);
    setters["d"] = set_i64(cfg.d);
    setters["average_mode"] = set_str(cfg.average_mode);
    setters["epochs"] = set_i64(cfg.epochs);
    setters["batch_size"] = set_i64(cfg.batch_size);
    setters["r"] = set_i64(cfg.r);
    setters["lr"] = set_f64(cfg.lr);
    setters["seed"] = [&cfg](const std::string& v) { cfg.seed = std::stoull(v); };
    setters["dtype"] = set_str(cfg.dtype);
    setters["checkpoint_every"] = set_i64(cfg.checkpoint_every);
    setters["sobel"] = [&cfg](const std::string& v) { cfg.sobel = parse_bool(v, "sobel"); };
    setters["jitter"] = set_f64(cfg.jitter);
    setters["crop"] = [&cfg](const std::string& v) { cfg.crop = parse_bool(v, "crop"); };
    setters["crop_size"] = set_i64(cfg.crop_size);
    setters["hflip"] = [&cfg](const std::string& v) { cfg.hflip = parse_bool(v, "hflip"); };
    setters["color"] = [&cfg](const std::string& v) { cfg.color = parse_bool(v, "color"); };
    setters["color_scale_min"] = set_f64(cfg.color_scale_min);
    setters["color_scale_max"] = set_f64(cfg.color_scale_max);
    setters["color_shift_min"] = set_f64(cfg.color_shift_min);
    setters["color_shift_max"] = set_f64(cfg.color_shift_max);
    setters["rotation"] = [&cfg](const std::string& v) { cfg.rotation = parse_bool(v, "rotation"); };
    setters["rotation_max_deg"] = set_f64(cfg.rotation_max_deg);
    setters["split"] = set_str(cfg.split);
    setters["train_frac"] = set_f64(cfg.train_frac);
    setters["out_dir"] = set_str(cfg.out_dir);

    std::istringstream in(text);
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto it = setters.find(key);
        if (it == setters.end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        try {
            it->second(value);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("line " + std::to_string(lineno) + ": bad value '" + value + "' for key '" + key + "'");
        }
    }
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace iic
