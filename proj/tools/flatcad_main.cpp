// flatcad: fit sinusoidal SDF networks to point clouds with the mixed
// Weingarten curvature proxy, extract meshes, and evaluate reconstructions.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>

#include "flatcad/config.hpp"
#include "flatcad/geometry.hpp"
#include "flatcad/meshing.hpp"
#include "flatcad/metrics.hpp"
#include "flatcad/net.hpp"
#include "flatcad/sampling.hpp"
#include "flatcad/shapes.hpp"
#include "flatcad/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace flatcad;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNonFinite = 2;
constexpr int kExitEmptySurface = 3;

struct Transform {
    Vec3 center{0, 0, 0};
    Real scale = 1;
};

void write_meta(const std::string& checkpoint_path, const Transform& tf, const TrainConfig& cfg) {
    json j;
    j["center"] = {tf.center.x, tf.center.y, tf.center.z};
    j["scale"] = tf.scale;
    j["route"] = route_name(cfg.route);
    j["fd_step"] = cfg.fd_step;
    std::ofstream out(checkpoint_path + ".meta.json");
    out << j.dump(2) << "\n";
}

Transform read_meta(const std::string& checkpoint_path) {
    Transform tf;
    std::ifstream in(checkpoint_path + ".meta.json");
    if (!in) return tf;  // identity when no sidecar exists
    json j;
    in >> j;
    if (j.contains("center")) tf.center = {j["center"][0], j["center"][1], j["center"][2]};
    if (j.contains("scale")) tf.scale = j["scale"];
    return tf;
}

void write_history_csv(const std::string& path, const RunHistory& history) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "iteration,dm,dnm,eik,proxy,gauss,total,iter_ms,cd_eval\n";
    out.precision(17);
    for (const auto& r : history.iterations) {
        out << r.iteration << ',' << r.loss.dm << ',' << r.loss.dnm << ',' << r.loss.eik << ','
            << r.loss.proxy << ',' << r.loss.gauss << ',' << r.loss.total << ',' << r.iter_ms << ',';
        if (r.has_cd()) out << r.cd_eval;
        out << '\n';
    }
}

int cmd_fit(const std::string& cloud_path, const std::string& config_path,
            const std::string& out_dir, long seed_override, const std::string& route_override,
            Real h_override) {
    TrainConfig cfg;
    if (!config_path.empty()) cfg = parse_config_file(config_path);
    if (seed_override >= 0) {
        const auto s = static_cast<std::uint64_t>(seed_override);
        cfg.seeds = {s, s + 1, s + 2, s + 3, s + 4};
    }
    if (!route_override.empty()) {
        cfg.route = route_from_string(route_override);
        if (cfg.route == Route::GaussBaseline && cfg.weights.w_gauss == 0) {
            cfg.weights.w_gauss = cfg.weights.w_proxy;
            cfg.weights.w_proxy = 0;
        }
    }
    if (h_override > 0) cfg.fd_step = h_override;
    cfg.validate();

    const RawCloud raw = read_cloud_file(cloud_path);
    const PointCloud cloud = normalize_cloud(raw.points, raw.normals);
    const Transform tf{cloud.center, cloud.scale};

    fs::create_directories(out_dir);
    {
        std::ofstream cfg_out(out_dir + "/config_effective.cfg");
        cfg_out << serialize_config(cfg);
    }

    TrainCallbacks cb;
    cb.on_checkpoint = [&](int iter, const NetworkParams& p) {
        std::ostringstream name;
        name << out_dir << "/checkpoint_" << std::setw(6) << std::setfill('0') << iter + 1 << ".bin";
        save_checkpoint(p, name.str());
        write_meta(name.str(), tf, cfg);
    };

    const auto t0 = std::chrono::steady_clock::now();
    const auto [params, history] = train(cfg, cloud, cb);
    const Real wall_s =
        std::chrono::duration<Real>(std::chrono::steady_clock::now() - t0).count();

    const std::string best_path = out_dir + "/checkpoint_best.bin";
    save_checkpoint(params, best_path);
    write_meta(best_path, tf, cfg);
    export_params_text(params, out_dir + "/checkpoint_best.json");
    write_history_csv(out_dir + "/history.csv", history);

    json summary;
    summary["iterations_run"] = history.iterations.size();
    summary["best_iteration"] = history.best_iteration;
    summary["best_cd_proxy"] = history.best_cd;
    summary["mean_iter_ms"] = history.mean_iter_ms;
    summary["std_iter_ms"] = history.std_iter_ms;
    summary["wall_seconds"] = wall_s;
    summary["points"] = cloud.points.size();
    summary["route"] = route_name(cfg.route);
    std::ofstream sum_out(out_dir + "/summary.json");
    sum_out << summary.dump(2) << "\n";

    std::cout << "fit: " << history.iterations.size() << " iterations, best cd "
              << history.best_cd << " at iteration " << history.best_iteration << "\n";
    return kExitOk;
}

int cmd_mesh(const std::string& checkpoint_path, int resolution, const std::string& out_path) {
    const NetworkParams params = load_checkpoint(checkpoint_path);
    const Transform tf = read_meta(checkpoint_path);
    const Net net(params);
    const TriangleMesh mesh = marching_cubes(net, resolution);
    if (mesh.empty()) {
        std::cerr << "mesh: no zero crossing found (empty surface)\n";
        return kExitEmptySurface;
    }
    export_mesh(mesh, out_path, mesh_format_for_path(out_path), tf.center, tf.scale);
    std::cout << "mesh: " << mesh.vertices.size() << " vertices, " << mesh.triangles.size()
              << " triangles -> " << out_path << "\n";
    return kExitOk;
}

struct PredSurface {
    TriangleMesh mesh;            // raw (de-normalized) coordinates
    std::vector<Vec3> points;     // samples, raw
    std::vector<Vec3> normals;
};

PredSurface predicted_surface(const std::string& mesh_path, const std::string& checkpoint_path,
                              int resolution, std::size_t n_samples, std::uint64_t seed) {
    PredSurface pred;
    if (!checkpoint_path.empty()) {
        const NetworkParams params = load_checkpoint(checkpoint_path);
        const Transform tf = read_meta(checkpoint_path);
        const Net net(params);
        TriangleMesh mesh = marching_cubes(net, resolution);
        if (mesh.empty()) throw Error("empty surface from checkpoint");
        const MeshSamples samples = sample_mesh_surface(mesh, n_samples, seed);
        pred.points.reserve(samples.points.size());
        pred.normals.reserve(samples.points.size());
        for (std::size_t i = 0; i < samples.points.size(); ++i) {
            // normals from the field gradient at the sampled (normalized) points
            const auto [f, g] = net.value_and_gradient(samples.points[i]);
            (void)f;
            const Real gn = norm(g);
            pred.normals.push_back(gn > eps_norm ? g / gn : samples.normals[i]);
            pred.points.push_back(samples.points[i] / tf.scale + tf.center);
        }
        for (Vec3& v : mesh.vertices) v = v / tf.scale + tf.center;
        pred.mesh = std::move(mesh);
        return pred;
    }
    pred.mesh = read_mesh_file(mesh_path);
    if (pred.mesh.empty()) throw Error("empty mesh: " + mesh_path);
    MeshSamples samples = sample_mesh_surface(pred.mesh, n_samples, seed);
    pred.points = std::move(samples.points);
    pred.normals = std::move(samples.normals);
    return pred;
}

int cmd_eval(const std::string& mesh_path, const std::string& checkpoint_path,
             const std::string& gt_path, const std::string& out_path, int resolution,
             std::size_t n_samples, bool no_nc, const std::string& heatmap_path,
             std::uint64_t seed) {
    PredSurface pred = predicted_surface(mesh_path, checkpoint_path, resolution, n_samples, seed);
    const RawCloud gt = read_cloud_file(gt_path);

    MetricRecord rec;
    rec.cd_x1000 = 1000 * chamfer_l1(pred.points, gt.points);
    rec.f1_x100 = 100 * f1_score(pred.points, gt.points, 5e-3);
    if (!no_nc) {
        if (gt.normals.empty()) throw MissingNormals("ground-truth cloud has no normals");
        rec.nc_x100 = 100 * normal_consistency(pred.points, pred.normals, gt.points, gt.normals);
        rec.has_nc = true;
    }
    rec.hausdorff_raw = hausdorff_map(pred.mesh, gt.points);
    if (!heatmap_path.empty())
        export_mesh(pred.mesh, heatmap_path, mesh_format_for_path(heatmap_path));

    json j;
    j["cd_x1000"] = rec.cd_x1000;
    j["f1_x100"] = rec.f1_x100;
    if (rec.has_nc) j["nc_x100"] = rec.nc_x100;
    j["hausdorff_raw"] = rec.hausdorff_raw;
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot open for writing: " + out_path);
    out << j.dump(2) << "\n";
    std::ofstream csv(out_path + ".csv");
    csv << "nc_x100,cd_x1000,f1_x100,hausdorff_raw\n";
    csv.precision(17);
    if (rec.has_nc) csv << rec.nc_x100;
    csv << ',' << rec.cd_x1000 << ',' << rec.f1_x100 << ',' << rec.hausdorff_raw << '\n';

    std::cout << "eval:";
    if (rec.has_nc) std::cout << " NC " << rec.nc_x100;
    std::cout << " CD " << rec.cd_x1000 << " F1 " << rec.f1_x100 << " Hausdorff "
              << rec.hausdorff_raw << "\n";
    return kExitOk;
}

int cmd_bench(const std::string& shape_list, const std::string& route_list,
              const std::string& out_csv, const std::string& config_path, long seed_override) {
    TrainConfig base;
    if (!config_path.empty()) {
        base = parse_config_file(config_path);
    } else {
        base.width = 64;
        base.max_iters = 500;
        base.plateau_window = 500;
        base.eval_every = 100;
        base.batch_manifold = 2000;
        base.batch_freespace = 2000;
        base.shell_count = 2000;
        base.checkpoint_every = 0;
    }
    if (seed_override >= 0) {
        const auto s = static_cast<std::uint64_t>(seed_override);
        base.seeds = {s, s + 1, s + 2, s + 3, s + 4};
    }

    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) out.push_back(item);
        }
        return out;
    };

    std::ofstream out(out_csv);
    if (!out) throw IoError("cannot open for writing: " + out_csv);
    out << "shape,route,iterations,mean_iter_ms,std_iter_ms,conv_iter,conv_time_s,"
           "cd_x1000,f1_x100,nc_x100\n";
    out.precision(10);

    for (const std::string& shape_name : split(shape_list)) {
        const AnalyticShape shape = shape_by_name(shape_name);
        const SurfaceSampleSet cloud_set = sample_surface(shape, 5000, 1234);
        const PointCloud cloud = normalize_cloud(cloud_set.points, cloud_set.normals);
        const SurfaceSampleSet gt = sample_surface(shape, 10000, 777);

        for (const std::string& route_name_str : split(route_list)) {
            TrainConfig cfg = base;
            cfg.route = route_from_string(route_name_str);
            if (cfg.route == Route::GaussBaseline) {
                cfg.weights.w_gauss = cfg.weights.w_proxy > 0 ? cfg.weights.w_proxy : 10;
                cfg.weights.w_proxy = 0;
            } else {
                if (cfg.weights.w_proxy == 0) cfg.weights.w_proxy = cfg.weights.w_gauss;
                cfg.weights.w_gauss = 0;
            }
            std::cout << "bench: " << shape_name << " / " << route_name_str << "...\n";
            const auto [params, history] = train(cfg, cloud);

            // final metrics against fresh oracle samples, raw units
            const Net net(params);
            const TriangleMesh mesh = marching_cubes(net, 96);
            Real cd = std::numeric_limits<Real>::quiet_NaN();
            Real f1 = cd, nc = cd;
            if (!mesh.empty()) {
                const MeshSamples samples = sample_mesh_surface(mesh, 50000, 99);
                std::vector<Vec3> pred_pts(samples.points.size());
                std::vector<Vec3> pred_nrm(samples.points.size());
                for (std::size_t i = 0; i < samples.points.size(); ++i) {
                    const auto [f, g] = net.value_and_gradient(samples.points[i]);
                    (void)f;
                    const Real gn = norm(g);
                    pred_nrm[i] = gn > eps_norm ? g / gn : samples.normals[i];
                    pred_pts[i] = cloud.to_raw(samples.points[i]);
                }
                cd = 1000 * chamfer_l1(pred_pts, gt.points);
                f1 = 100 * f1_score(pred_pts, gt.points, 5e-3);
                nc = 100 * normal_consistency(pred_pts, pred_nrm, gt.points, gt.normals);
            }
            const Real conv_time_s =
                history.mean_iter_ms * static_cast<Real>(history.best_iteration + 1) / 1000;
            out << shape_name << ',' << route_name_str << ',' << history.iterations.size() << ','
                << history.mean_iter_ms << ',' << history.std_iter_ms << ','
                << history.best_iteration << ',' << conv_time_s << ',' << cd << ',' << f1 << ','
                << nc << '\n';
        }
    }
    std::cout << "bench: wrote " << out_csv << "\n";
    return kExitOk;
}

int cmd_curvcheck() {
    int failures = 0;
    auto report = [&](const std::string& name, bool ok, const std::string& detail = "") {
        std::cout << (ok ? "[PASS] " : "[FAIL] ") << name;
        if (!detail.empty()) std::cout << " (" << detail << ")";
        std::cout << "\n";
        if (!ok) ++failures;
    };
    constexpr Real pi = std::numbers::pi;

    {
        // frame rotation law at a principal-aligned cylinder point
        const CylinderZ cyl(2.0);
        const Vec3 x{std::sqrt(2.0), std::sqrt(2.0), 0};
        Real worst = 0;
        for (int t = 0; t < 64; ++t) {
            const Real theta = 2 * pi * t / 64;
            const Real expected = 0.25 * std::sin(2 * theta);
            worst = std::max(worst, std::abs(s12_autodiff(cyl, x, theta) - expected));
        }
        report("frame rotation law S12 = (k2-k1)/2 sin(2 theta)", worst < 1e-8,
               "max |err| = " + std::to_string(worst));
    }
    {
        const CylinderZ cyl(2.0);
        Rng rng = make_engine(2718);
        std::uniform_real_distribution<Real> th(0.0, 2 * pi);
        Real sum_sq = 0, sum_abs = 0;
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            const Real s = s12_autodiff(cyl, {2, 0, 0}, th(rng));
            sum_sq += s * s;
            sum_abs += std::abs(s);
        }
        const bool ok_sq = std::abs(sum_sq / n - 0.03125) < 0.02 * 0.03125;
        const bool ok_abs = std::abs(sum_abs / n - 0.5 / pi) < 0.02 * 0.5 / pi;
        report("E[S12^2] = (k2-k1)^2/8", ok_sq, std::to_string(sum_sq / n));
        report("E[|S12|] = |k2-k1|/pi", ok_abs, std::to_string(sum_abs / n));
    }
    {
        const Sphere sphere(1.0);
        const Plane plane({0, 0, 1}, 0.0);
        Rng rng = make_engine(31415);
        std::uniform_real_distribution<Real> th(0.0, 2 * pi);
        Real worst = 0;
        for (int i = 0; i < 100; ++i) {
            worst = std::max(worst, std::abs(s12_autodiff(sphere, {0, 1.5, 0}, th(rng))));
            worst = std::max(worst, std::abs(s12_autodiff(plane, {0.3, -0.4, 0.2}, th(rng))));
        }
        report("umbilic invariance |S12| ~ 0 on sphere and plane", worst < 1e-8);
    }
    {
        const bool sphere_ok =
            std::abs(gaussian_curvature(Sphere(0.5), {0.5, 0, 0}) - 4.0) < 1e-8;
        const bool cyl_ok = std::abs(gaussian_curvature(CylinderZ(2.0), {2, 0, 1})) < 1e-8;
        const bool torus_ok =
            std::abs(gaussian_curvature(Torus(0.6, 0.2), {0.8, 0, 0}) - 6.25) < 1e-6;
        report("Gaussian curvature closed forms", sphere_ok && cyl_ok && torus_ok);
    }
    {
        // stencil exactness on f = xy
        struct XY {
            Real value(const Vec3& x) const { return x.x * x.y; }
            std::pair<Real, Vec3> value_and_gradient(const Vec3& x) const {
                return {x.x * x.y, {x.y, x.x, 0}};
            }
            Vec3 hvp(const Vec3&, const Vec3& v) const { return {v.y, v.x, 0}; }
        } xy;
        const Real d = mixed_second_difference(xy, {0.3, 0.4, 0.0}, {1, 0, 0}, {0, 1, 0}, 0.05);
        report("mixed stencil exact on quadratics", std::abs(d - 1.0) < 1e-10);
    }
    {
        // stencil converges to the exact route on a random network
        const NetworkParams p = init_siren(4, 32, 30, 5);
        const Net net(p);
        const Vec3 x{0.21, -0.37, 0.11};
        const Real theta = 0.77;
        const Real exact = s12_autodiff(net, x, theta);
        std::vector<Real> errs;
        for (const Real h : {1e-2, 1e-3, 1e-4})
            errs.push_back(std::abs(s12_finite_difference(net, x, theta, h) - exact));
        const Real order = std::log10(errs[0] / errs[2]) / 2;
        report("stencil error order in [0.8, 2.2]", order > 0.8 && order < 2.2,
               "measured " + std::to_string(order));
        report("route agreement at h = 1e-4", errs[2] < 1e-3, std::to_string(errs[2]));
    }
    std::cout << (failures == 0 ? "curvcheck: all checks passed\n"
                                : "curvcheck: FAILURES present\n");
    return failures == 0 ? kExitOk : kExitError;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"curvature-proxy SDF reconstruction"};
    app.require_subcommand(1);

    std::string cloud_path, config_path, out_path, checkpoint_path, mesh_path, gt_path;
    std::string route_override, shape_list, route_list, heatmap_path;
    long seed = -1;
    Real h_override = -1;
    int resolution = 128;
    std::size_t n_samples = 100000;
    bool no_nc = false;

    auto* fit = app.add_subcommand("fit", "fit a network to a point cloud");
    fit->add_option("cloud", cloud_path, "input cloud (.xyz text or .ply)")->required();
    fit->add_option("--config", config_path, "config file (key = value lines)");
    fit->add_option("--out", out_path, "output directory")->required();
    fit->add_option("--seed", seed, "override all RNG seeds");
    fit->add_option("--route", route_override, "proxy_fd|proxy_ad|gauss|none");
    fit->add_option("--h", h_override, "stencil step for proxy_fd");

    auto* mesh = app.add_subcommand("mesh", "extract the zero level-set mesh");
    mesh->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
    mesh->add_option("--resolution", resolution, "marching-cubes grid resolution");
    mesh->add_option("--out", out_path, "output mesh (.obj or .ply)")->required();

    auto* eval = app.add_subcommand("eval", "evaluate a reconstruction against a cloud");
    eval->add_option("--mesh", mesh_path, "predicted mesh (.obj or .ply)");
    eval->add_option("--checkpoint", checkpoint_path, "predicted checkpoint");
    eval->add_option("--gt", gt_path, "ground-truth cloud")->required();
    eval->add_option("--out", out_path, "output metrics JSON path")->required();
    eval->add_option("--resolution", resolution, "meshing resolution for checkpoints");
    eval->add_option("--samples", n_samples, "surface sample count");
    eval->add_flag("--no-nc", no_nc, "skip normal consistency");
    eval->add_option("--heatmap", heatmap_path, "write per-vertex distance heat map PLY");
    eval->add_option("--seed", seed, "sampling seed");

    auto* bench = app.add_subcommand("bench", "timing and quality over shapes x routes");
    bench->add_option("--shapes", shape_list, "comma list from the shape catalog")->required();
    bench->add_option("--routes", route_list, "comma list of routes")->required();
    bench->add_option("--out", out_path, "output CSV")->required();
    bench->add_option("--config", config_path, "config file");
    bench->add_option("--seed", seed, "override all RNG seeds");

    auto* curv = app.add_subcommand("curvcheck", "run the curvature invariant suite");
    (void)curv;

    CLI11_PARSE(app, argc, argv);

    try {
        if (fit->parsed())
            return cmd_fit(cloud_path, config_path, out_path, seed, route_override, h_override);
        if (mesh->parsed()) return cmd_mesh(checkpoint_path, resolution, out_path);
        if (eval->parsed()) {
            if (mesh_path.empty() == checkpoint_path.empty()) {
                std::cerr << "eval: exactly one of --mesh / --checkpoint is required\n";
                return kExitError;
            }
            return cmd_eval(mesh_path, checkpoint_path, gt_path, out_path, resolution, n_samples,
                            no_nc, heatmap_path, seed >= 0 ? static_cast<std::uint64_t>(seed) : 9);
        }
        if (bench->parsed()) return cmd_bench(shape_list, route_list, out_path, config_path, seed);
        if (curv->parsed()) return cmd_curvcheck();
    } catch (const NonFiniteLoss& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNonFinite;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
