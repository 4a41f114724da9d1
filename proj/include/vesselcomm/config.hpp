//! \file vesselcomm/config.hpp
//! JSON configuration documents. Every section and key is optional; missing
//! values take the defaults from default_config(). Unknown keys are
//! rejected so that typos do not silently fall back to defaults.
#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include "json.hpp"

#include "core_model.hpp"

namespace vesselcomm {

namespace detail {

using json = nlohmann::json;

inline void check_keys(json const& obj, std::string const& section,
                       std::initializer_list<char const*> allowed)
{
    if (!obj.is_object())
        throw ConfigError(ConfigError::Kind::validation,
                          "section '" + section + "' must be an object");
    for (auto const& [key, value] : obj.items())
    {
        bool known = false;
        for (auto const* a : allowed)
            known = known || key == a;
        if (!known)
            throw ConfigError(ConfigError::Kind::validation,
                              "unknown key '" + key + "' in section '"
                                  + section + "'");
    }
}

template<class T>
void read(json const& obj, char const* key, T& out, std::string const& section)
{
    auto it = obj.find(key);
    if (it == obj.end())
        return;
    try
    {
        out = it->template get<T>();
    }
    catch (json::exception const&)
    {
        throw ConfigError(ConfigError::Kind::validation,
                          "key '" + std::string(key) + "' in section '"
                              + section + "' has the wrong type");
    }
}

inline json parse_document(std::string_view text)
{
    try
    {
        if (text.find_first_not_of(" \t\r\n") == std::string_view::npos)
            return json::object();
        auto doc = json::parse(text);
        if (!doc.is_object())
            throw ConfigError(ConfigError::Kind::validation,
                              "configuration document must be a JSON object");
        return doc;
    }
    catch (json::parse_error const& e)
    {
        // nlohmann reports "at line L, column C" in what().
        throw ConfigError(ConfigError::Kind::parse,
                          std::string("config parse error: ") + e.what());
    }
}

inline char const* kind_name(SpeciesKind k)
{
    return k == SpeciesKind::carrier ? "carrier" : "cell";
}

inline SpeciesSpec read_species(json const& obj)
{
    check_keys(obj, "species",
               {"name", "kind", "radius_um", "concentration_per_mm3",
                "receptors", "receptor_radius_um", "diffusivity_um2_per_us"});
    std::string name;
    read(obj, "name", name, "species");
    if (name.empty())
        throw ConfigError(ConfigError::Kind::validation,
                          "every species entry needs a name");

    SpeciesSpec s;
    s.name = name;
    for (auto const& d : default_species())
        if (d.name == name)
            s = d;

    if (auto it = obj.find("kind"); it != obj.end())
    {
        auto k = it->get<std::string>();
        if (k == "carrier")
            s.kind = SpeciesKind::carrier;
        else if (k == "cell")
            s.kind = SpeciesKind::cell;
        else
            throw ConfigError(ConfigError::Kind::validation,
                              "species kind must be 'carrier' or 'cell'");
    }
    read(obj, "radius_um", s.radius, "species");
    read(obj, "concentration_per_mm3", s.concentration, "species");
    read(obj, "receptors", s.receptor_count, "species");
    read(obj, "receptor_radius_um", s.receptor_radius, "species");
    if (auto it = obj.find("diffusivity_um2_per_us"); it != obj.end())
        s.diffusivity = it->get<double>();
    return s;
}

}  // namespace detail

/*!
 * Parse a configuration document into a validated SimulationConfig.
 *
 * Sections other than the simulation ones (encoder, receiver_chain,
 * experiment) are ignored here and read by load_experiment().
 */
inline SimulationConfig load_config(std::string_view text)
{
    using detail::check_keys;
    using detail::read;
    auto const doc = detail::parse_document(text);
    check_keys(doc, "<root>",
               {"vessel", "fluid", "species", "simulation", "transmitter",
                "receivers", "encoder", "receiver_chain", "experiment"});

    SimulationConfig c = default_config();

    if (auto it = doc.find("vessel"); it != doc.end())
    {
        check_keys(*it, "vessel", {"radius_um", "length_um", "outlet"});
        read(*it, "radius_um", c.geometry.radius, "vessel");
        read(*it, "length_um", c.geometry.length, "vessel");
        std::string outlet = "absorbing";
        read(*it, "outlet", outlet, "vessel");
        if (outlet != "absorbing")
            throw ConfigError(ConfigError::Kind::validation,
                              "only the 'absorbing' outlet policy is supported");
    }
    if (auto it = doc.find("fluid"); it != doc.end())
    {
        check_keys(*it, "fluid",
                   {"mean_velocity_um_per_us", "viscosity_pa_s", "temperature_k"});
        read(*it, "mean_velocity_um_per_us", c.fluid.mean_velocity, "fluid");
        read(*it, "viscosity_pa_s", c.fluid.viscosity, "fluid");
        read(*it, "temperature_k", c.fluid.temperature, "fluid");
    }
    if (auto it = doc.find("species"); it != doc.end())
    {
        if (!it->is_array())
            throw ConfigError(ConfigError::Kind::validation,
                              "'species' must be an array");
        c.species.clear();
        for (auto const& entry : *it)
            c.species.push_back(detail::read_species(entry));
    }
    if (auto it = doc.find("simulation"); it != doc.end())
    {
        auto const& s = *it;
        check_keys(s, "simulation",
                   {"time_step_us", "duration_us", "seed", "threads",
                    "deterministic", "carrier_collisions", "mobile_capture",
                    "poisson_populations", "max_sweeps"});
        read(s, "time_step_us", c.time_step, "simulation");
        read(s, "duration_us", c.duration, "simulation");
        read(s, "seed", c.seed, "simulation");
        read(s, "threads", c.threads, "simulation");
        read(s, "deterministic", c.deterministic, "simulation");
        read(s, "carrier_collisions", c.physics.carrier_collisions, "simulation");
        read(s, "mobile_capture", c.physics.mobile_capture, "simulation");
        read(s, "poisson_populations", c.physics.poisson_populations, "simulation");
        read(s, "max_sweeps", c.physics.max_sweeps, "simulation");
    }
    if (auto it = doc.find("transmitter"); it != doc.end())
    {
        check_keys(*it, "transmitter", {"species", "phi_rad", "d_um", "z_um"});
        read(*it, "species", c.transmitter.species, "transmitter");
        read(*it, "phi_rad", c.transmitter.position.phi, "transmitter");
        read(*it, "d_um", c.transmitter.position.r, "transmitter");
        read(*it, "z_um", c.transmitter.position.z, "transmitter");
    }
    if (auto it = doc.find("receivers"); it != doc.end())
    {
        auto& r = c.receivers;
        check_keys(*it, "receivers",
                   {"cell_side_um", "receptors", "receptor_radius_um",
                    "delta_L_min_um", "delta_L_max_um", "finite_receptors",
                    "recycle_time_us"});
        read(*it, "cell_side_um", r.cell_side, "receivers");
        read(*it, "receptors", r.receptor_count, "receivers");
        read(*it, "receptor_radius_um", r.receptor_radius, "receivers");
        read(*it, "delta_L_min_um", r.delta_L_min, "receivers");
        read(*it, "delta_L_max_um", r.delta_L_max, "receivers");
        read(*it, "finite_receptors", r.finite_receptors, "receivers");
        read(*it, "recycle_time_us", r.recycle_time, "receivers");
    }

    validate(c);
    return c;
}

inline nlohmann::json config_to_json(SimulationConfig const& c)
{
    nlohmann::json doc;
    doc["vessel"] = {{"radius_um", c.geometry.radius},
                     {"length_um", c.geometry.length},
                     {"outlet", "absorbing"}};
    doc["fluid"] = {{"mean_velocity_um_per_us", c.fluid.mean_velocity},
                    {"viscosity_pa_s", c.fluid.viscosity},
                    {"temperature_k", c.fluid.temperature}};
    auto species = nlohmann::json::array();
    for (auto const& s : c.species)
    {
        nlohmann::json e = {{"name", s.name},
                            {"kind", detail::kind_name(s.kind)},
                            {"radius_um", s.radius},
                            {"concentration_per_mm3", s.concentration},
                            {"receptors", s.receptor_count},
                            {"receptor_radius_um", s.receptor_radius}};
        if (s.diffusivity)
            e["diffusivity_um2_per_us"] = *s.diffusivity;
        species.push_back(std::move(e));
    }
    doc["species"] = std::move(species);
    doc["simulation"] = {{"time_step_us", c.time_step},
                         {"duration_us", c.duration},
                         {"seed", c.seed},
                         {"threads", c.threads},
                         {"deterministic", c.deterministic},
                         {"carrier_collisions", c.physics.carrier_collisions},
                         {"mobile_capture", c.physics.mobile_capture},
                         {"poisson_populations", c.physics.poisson_populations},
                         {"max_sweeps", c.physics.max_sweeps}};
    doc["transmitter"] = {{"species", c.transmitter.species},
                          {"phi_rad", c.transmitter.position.phi},
                          {"d_um", c.transmitter.position.r},
                          {"z_um", c.transmitter.position.z}};
    auto const& r = c.receivers;
    doc["receivers"] = {{"cell_side_um", r.cell_side},
                        {"receptors", r.receptor_count},
                        {"receptor_radius_um", r.receptor_radius},
                        {"delta_L_min_um", r.delta_L_min},
                        {"delta_L_max_um", r.delta_L_max},
                        {"finite_receptors", r.finite_receptors},
                        {"recycle_time_us", r.recycle_time}};
    return doc;
}

inline std::string serialize_config(SimulationConfig const& c)
{
    return config_to_json(c).dump(2);
}

}  // namespace vesselcomm
